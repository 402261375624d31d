fn main() {
    retroplan::cli::main_entry();
}
