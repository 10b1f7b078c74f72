//! Stand-in C++ language server speaking LSP over stdio.

use std::io::{self, BufReader};
use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use narrowfix::lsp::transcript::Handler;
use narrowfix::lsp::{read_message, write_message};
use narrowfix::stubls::StubServer;

#[derive(Parser)]
#[command(version, about = "Tree-sitter based stand-in for clangd")]
struct Args {
    /// Accepted for clangd command-line compatibility.
    #[arg(long)]
    compile_commands_dir: Option<PathBuf>,
    /// Simulate a crash on the first didChange unless this file exists;
    /// the file is created when crashing.
    #[arg(long)]
    crash_once_file: Option<PathBuf>,
    /// Simulate a crash on every first didChange.
    #[arg(long)]
    crash_on_change: bool,
    #[arg(long, hide = true)]
    log: Option<String>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut server = StubServer::new();
    server.crash_on_change = args.crash_on_change;
    if let Some(marker) = &args.crash_once_file {
        if !marker.exists() {
            std::fs::write(marker, b"crashed\n")?;
            server.crash_on_change = true;
        }
    }
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = io::stdout().lock();
    while let Some(msg) = read_message(&mut input)? {
        let is_exit = msg.method.as_deref() == Some("exit");
        for reply in server.handle(&msg) {
            write_message(&mut output, &reply)?;
        }
        if server.crashed() {
            std::process::exit(134);
        }
        if is_exit {
            break;
        }
    }
    Ok(())
}
