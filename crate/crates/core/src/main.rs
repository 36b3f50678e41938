use feature_partition::harness::cli::main_with;

fn main() {
    let code = main_with(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
