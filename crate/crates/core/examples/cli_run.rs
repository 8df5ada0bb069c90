// Drives the `v2g-menu run` command from code and reads its manifest.

use clap::Parser;
use v2g_menu::cli::{execute, Cli, Manifest};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("run");
    let cli = Cli::try_parse_from([
        "v2g-menu",
        "run",
        "--menu",
        "0,10,20",
        "--seed",
        "9",
        "--out",
        out.to_str().expect("utf-8 temp path"),
    ])?;
    // a small fleet keeps this quick
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "n_evs = 8\n")?;
    let mut cli = cli;
    cli.common.config = Some(cfg);
    execute(&cli)?;
    let text = std::fs::read_to_string(out.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    println!(
        "{} wrote {} files, config {}",
        manifest.command,
        manifest.files.len(),
        &manifest.config_hash[..12]
    );
    for f in &manifest.files {
        println!("  {:<16} {:>8} bytes", f.path, f.bytes);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
