fn main() { std::process::exit(vpfp_cli::cli_main(std::env::args())); }
