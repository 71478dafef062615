use clap::Parser;

fn main() -> anyhow::Result<()> {
    wienerrom_cli::run(wienerrom_cli::Cli::parse())
}
