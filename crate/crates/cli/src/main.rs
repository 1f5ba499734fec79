use clap::Parser;
use protoforge_cli::commands::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => println!("{}", serde_json::to_string_pretty(&out).expect("JSON value")),
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            let out = serde_json::json!({ "error": e.to_string(), "exit_code": code });
            println!("{out}");
            std::process::exit(code);
        }
    }
}
