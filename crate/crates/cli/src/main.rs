use clap::Parser;

fn main() {
    let cli = match diffctl::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { diffctl::exit::INPUT } else { diffctl::exit::OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(diffctl::run(cli));
}
