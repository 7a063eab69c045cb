fn main() { std::process::exit(groundmem::cli::main()) }
