use std::io;

fn main() {
    let env_seed = std::env::var("DYKSTRA_SEED").ok();
    let code = dykstra_tools::cli::run(std::env::args_os(), env_seed, &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
