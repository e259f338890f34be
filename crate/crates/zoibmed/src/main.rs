fn main() {
    std::process::exit(zoibmed::cli::main_entry());
}
