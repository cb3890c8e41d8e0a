use clap::Parser;

fn main() {
    let cli = eefx_cli::Cli::parse();
    match eefx_cli::run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            std::process::exit(out.code);
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
