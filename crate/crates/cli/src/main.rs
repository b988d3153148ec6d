mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Verdict;
use run::{Artifacts, Failure, Inputs, Manifest, EXIT_OK, EXIT_STATISTICAL, EXIT_VALIDATION};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(run_argv(&argv, Inputs::from_disk(), true))
}

fn run_argv(argv: &[String], inputs: Inputs, allow_replay: bool) -> u8 {
    let cli = match Cli::try_parse_from(std::iter::once("stabledrift".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_VALIDATION;
        }
        // only the first pool of a process sticks; results never depend on it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Replay(r) = &cli.command {
        if !allow_replay {
            eprintln!("error: a manifest cannot replay another replay");
            return EXIT_VALIDATION;
        }
        let manifest = match run::read_manifest(&r.manifest) {
            Ok(m) => m,
            Err(f) => return report(f),
        };
        let mut replay = manifest.argv.clone();
        replay.push("--out".into());
        replay.push(cli.global.out.to_string_lossy().into_owned());
        return run_argv(&replay, Inputs::from_manifest(&manifest), false);
    }

    let g = &cli.global;
    let mut art = Artifacts::new(g.emit_plot_data);
    let outcome = match &cli.command {
        Command::Sample(a) => commands::sample(a, g.seed, &inputs, &mut art),
        Command::Density(a) => commands::density(a, &inputs, &mut art),
        Command::Generator(a) => commands::generator(a, &inputs, &mut art),
        Command::Resolve(a) => commands::resolve(a, &inputs, &mut art),
        Command::Verify(a) => commands::verify(a, g.seed, &inputs, &mut art),
        Command::Probe(a) => commands::probe(a, g.seed, &inputs, &mut art),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let verdict = match outcome {
        Ok(v) => v,
        Err(f) => return report(f),
    };
    let manifest = Manifest {
        tool: "stabledrift".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: stabledrift_core::VERSION.into(),
        command: command_name(&cli.command).into(),
        argv: run::strip_out(argv),
        seed: g.seed,
        sub_seeds: Default::default(),
        threads: g.threads,
        inputs: inputs.records(),
        outputs: Vec::new(),
        status: match &verdict {
            Verdict::Pass => "pass".into(),
            Verdict::Fail(m) => format!("fail: {m}"),
        },
    };
    if let Err(f) = art.commit(&g.out, manifest) {
        return report(f);
    }
    match verdict {
        Verdict::Pass => {
            println!("wrote {}", g.out.join("manifest.json").display());
            EXIT_OK
        }
        Verdict::Fail(m) => {
            eprintln!("check failed: {m} (report in {})", g.out.display());
            EXIT_STATISTICAL
        }
    }
}

fn report(f: Failure) -> u8 {
    let kind = match f {
        Failure::Validation(_) => "invalid input",
        Failure::Numerical(_) => "numerical failure",
    };
    eprintln!("error ({kind}): {}", f.message());
    f.code()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sample(_) => "sample",
        Command::Density(_) => "density",
        Command::Generator(_) => "generator",
        Command::Resolve(_) => "resolve",
        Command::Verify(_) => "verify",
        Command::Probe(_) => "probe",
        Command::Replay(_) => "replay",
    }
}
