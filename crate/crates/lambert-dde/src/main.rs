fn main() {
    std::process::exit(lambert_dde::run_cli());
}
