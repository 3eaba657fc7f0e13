fn main() {
    std::process::exit(border_curve_cli::run(std::env::args_os()));
}
