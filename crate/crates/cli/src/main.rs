fn main() {
    std::process::exit(latent_hazard::commands::main_with_args(std::env::args_os()));
}
