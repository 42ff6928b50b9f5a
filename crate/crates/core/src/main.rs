use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use mcs_term::io::{in_original_order, parse_mcs, print_mcs, Report};
use mcs_term::oracle::{check_system, concrete_prefix_check, random_corpus, CorpusSpec};
use mcs_term::ranking::{check_ranking, synthesize_ranking, RankError};
use mcs_term::termination::{decide, prepared, Algorithm};
use mcs_term::transform::{fully_elaborate, fully_elaborate_rooted};
use mcs_term::witness::{find_witness, unroll};
use mcs_term::Mcs;

const TERMINATING: u8 = 0;
const NONTERMINATING: u8 = 1;
const USAGE: u8 = 2;
const INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mcsterm", version, about = "Termination analysis for monotonicity constraint systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide termination, optionally printing a non-termination witness.
    Analyze {
        file: PathBuf,
        #[arg(long, default_value = "stable-closure")]
        algorithm: Algorithm,
        /// Analyse only runs starting at this point (name or index).
        #[arg(long)]
        root: Option<String>,
        /// Number of states in the witness prefix.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        witness: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Synthesize and verify a lexicographic ranking function.
    Rank {
        file: PathBuf,
        #[arg(long)]
        root: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Print a transformed system in the input format.
    #[command(group(ArgGroup::new("kind").required(true).args(["stabilize", "elaborate"])))]
    Transform {
        file: PathBuf,
        #[arg(long)]
        stabilize: bool,
        #[arg(long)]
        elaborate: bool,
        #[arg(long)]
        root: Option<String>,
    },
    /// Cross-validate every algorithm on a random corpus.
    Selfcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
}

struct Failure(u8, String);

fn load(file: &PathBuf) -> Result<Mcs, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| Failure(USAGE, format!("{}: {e}", file.display())))?;
    parse_mcs(&text)
        .map(|d| d.system)
        .map_err(|e| Failure(USAGE, format!("{}:{e}", file.display())))
}

fn resolve_root(sys: &Mcs, root: Option<&str>) -> Result<Option<usize>, Failure> {
    let Some(id) = root else { return Ok(sys.root) };
    sys.point_index(id)
        .or_else(|| id.parse().ok().filter(|&i: &usize| i < sys.points.len()))
        .map(Some)
        .ok_or_else(|| Failure(USAGE, format!("unknown point `{id}`")))
}

fn emit(report: &Report, json: bool) {
    if json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
}

fn analyze(file: &PathBuf, alg: Algorithm, root: Option<&str>, witness: Option<u64>, json: bool) -> Result<u8, Failure> {
    let sys = load(file)?;
    let root = resolve_root(&sys, root)?;
    let verdict = decide(&sys, alg, root);
    let mut found = None;
    if let (false, Some(len)) = (verdict.terminating, witness) {
        let len = len as usize;
        let w = find_witness(&sys, root, len)
            .ok_or_else(|| Failure(INTERNAL, "no witness for a non-terminating system".into()))?;
        if !concrete_prefix_check(&unroll(&w.cycle, len), &sys, &w.prefix) {
            return Err(Failure(INTERNAL, "witness prefix does not satisfy the system".into()));
        }
        found = Some(w);
    }
    emit(&Report { system: &sys, verdict: &verdict, witness: found.as_ref(), ranking: None }, json);
    Ok(if verdict.terminating { TERMINATING } else { NONTERMINATING })
}

fn rank(file: &PathBuf, root: Option<&str>, json: bool) -> Result<u8, Failure> {
    let sys = load(file)?;
    let root = resolve_root(&sys, root)?;
    let verdict = decide(&sys, Algorithm::StableClosure, root);
    match synthesize_ranking(&sys, root) {
        Ok(rho) => {
            if !verdict.terminating {
                return Err(Failure(INTERNAL, "ranking found for a non-terminating system".into()));
            }
            check_ranking(&sys, &rho).map_err(|v| Failure(INTERNAL, format!("ranking rejected: {v}")))?;
            emit(&Report { system: &sys, verdict: &verdict, witness: None, ranking: Some(&rho) }, json);
            Ok(TERMINATING)
        }
        Err(RankError::NonTerminating) if !verdict.terminating => {
            emit(&Report { system: &sys, verdict: &verdict, witness: None, ranking: None }, json);
            Ok(NONTERMINATING)
        }
        Err(e) => Err(Failure(INTERNAL, format!("ranking failed: {e}"))),
    }
}

fn transform(file: &PathBuf, elaborate: bool, root: Option<&str>) -> Result<u8, Failure> {
    let sys = load(file)?;
    let root = resolve_root(&sys, root)?;
    let (out, map) = match (elaborate, root) {
        (false, r) => prepared(&sys, true, r),
        (true, None) => fully_elaborate(&sys),
        (true, Some(r)) => fully_elaborate_rooted(&sys, r).map_err(|e| Failure(INTERNAL, e.to_string()))?,
    };
    let mut out = in_original_order(&out, &map);
    let roots: Vec<usize> = (0..out.points.len()).filter(|&p| Some(map.points[p].orig) == root).collect();
    out.root = match roots[..] {
        [r] => Some(r),
        _ => None,
    };
    print!("{}", print_mcs(&out));
    Ok(TERMINATING)
}

fn selfcheck(seed: u64, count: usize) -> Result<u8, Failure> {
    let spec = CorpusSpec { seed, count, ..CorpusSpec::default() };
    let corpus = random_corpus(&spec).map_err(|e| Failure(USAGE, e.to_string()))?;
    let (mut terminating, mut failed) = (0, 0);
    for (i, sys) in corpus.iter().enumerate() {
        let check = check_system(sys);
        terminating += usize::from(check.terminating);
        if !check.problems.is_empty() {
            failed += 1;
            eprintln!("system {i}:");
            for p in &check.problems {
                eprintln!("  {p}");
            }
            eprint!("{}", print_mcs(sys));
        }
    }
    println!(
        "{} systems, {terminating} terminating, {} non-terminating, {failed} with disagreements",
        corpus.len(),
        corpus.len() - terminating
    );
    Ok(if failed == 0 { TERMINATING } else { INTERNAL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { file, algorithm, root, witness, json } => {
            analyze(file, *algorithm, root.as_deref(), *witness, *json)
        }
        Command::Rank { file, root, json } => rank(file, root.as_deref(), *json),
        Command::Transform { file, elaborate, root, .. } => transform(file, *elaborate, root.as_deref()),
        Command::Selfcheck { seed, count } => selfcheck(*seed, *count),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
