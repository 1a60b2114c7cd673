fn main() { std::process::exit(threefield::cli::run()); }
