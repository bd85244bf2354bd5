fn main() {
    std::process::exit(vecspin::cli::main());
}
