fn main() {
    std::process::exit(geomext::cli::main_entry());
}
