fn main() {
    std::process::exit(v2g_menu::cli::main());
}
