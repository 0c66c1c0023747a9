use clap::Parser;
use twoscale_cli::{compare_files, parse_config, run_matrix, Cli, Command, EXIT_PARTIAL};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => parse_config(&args).and_then(|cfg| {
            let summary = run_matrix(&cfg)?;
            let failed = summary.failed_cells();
            eprintln!(
                "{} cells, {failed} failed; outputs in {}",
                summary.cells.len(),
                cfg.out.display()
            );
            Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
        }),
        Command::Compare(args) => compare_files(&args.reports, args.out.as_deref()).map(|_| 0),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
