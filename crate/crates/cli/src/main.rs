fn main() {
    std::process::exit(spa_cli::run_command(std::env::args_os()));
}
