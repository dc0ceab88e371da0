use std::process::ExitCode;

use log::{error, info};

use platoon::cli::{parse_args, Command, RunRequest};
use platoon::io::{emit_plotdata, load_config, write_log};
use platoon::sim::{run, scenario_preset, SCENARIOS};

fn execute(req: &RunRequest) -> Result<(), Box<dyn std::error::Error>> {
    let mut config = scenario_preset(&req.scenario)?.with_variant(req.variant);
    if let Some(path) = &req.config {
        config = load_config(&config, path)?;
        // the command line wins over the file
        config.variant = req.variant;
    }
    if let Some(d) = req.duration {
        config.duration = d;
    }
    let out = run(&config)?;
    write_log(&out.log, req.format, &req.out)?;
    if let Some(dir) = &req.plot_dir {
        let files = emit_plotdata(&out.log, dir)?;
        info!("wrote {} plot series to {}", files.len(), dir.display());
    }
    let r = &out.report;
    match (&r.first_time, &r.pair) {
        (Some(t), Some((a, b))) => println!("collision: {a} and {b} at t={t:.2}s"),
        _ => println!("collision: none"),
    }
    if let Some(t) = out.log.first_infeasible() {
        println!("first infeasible QP at t={t:.2}s");
    }
    println!("min TTC: {:.3}s", r.min_ttc);
    println!("wrote {}", req.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::List => {
            for name in SCENARIOS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match execute(&args.into()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                error!("{e}");
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
