//! One PASS/FAIL line per acceptance criterion, read off two full report runs.

use acw_core::harness::{run_experiment, ExperimentConfig, Report, ReportRecord, Suite};
use std::process::ExitCode;

const SEED: u64 = 20_241_019;

struct Check<'a> {
    report: &'a Report,
    lines: Vec<(bool, String)>,
}

impl Check<'_> {
    fn records(&self, prefix: &str) -> Vec<&ReportRecord> {
        self.report.records.iter().filter(|r| r.id.starts_with(prefix)).collect()
    }

    fn runtime(&self, job: &str) -> f64 {
        self.report.runtime_ms.get(job).copied().unwrap_or(f64::INFINITY)
    }

    fn push(&mut self, n: u32, name: &str, ok: bool, detail: String) {
        self.lines.push((ok, format!("criterion {n:>2} {name}: {detail}")));
    }

    /// Every record under each prefix exists and passes.
    fn all_pass(&self, prefixes: &[&str]) -> bool {
        prefixes.iter().all(|p| {
            let rs = self.records(p);
            !rs.is_empty() && rs.iter().all(|r| r.pass)
        })
    }

    fn value(&self, id: &str) -> f64 {
        self.report.record(id).map_or(f64::NAN, |r| r.value.hi())
    }
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::all(SEED);
    let first = run_experiment(&cfg).expect("full suite runs");
    let second = run_experiment(&cfg).expect("full suite runs again");
    let mut c = Check { report: &first, lines: Vec::new() };

    let t = c.runtime("lemmas/distance-chain");
    let ok = c.all_pass(&["lemmas/distance-chain"]) && cfg.fuzz >= 10_000 && cfg.tolerance <= 1e-9 && t < 30_000.0;
    c.push(1, "distance chain", ok, format!("{} violations over {} pairs, {:.0} ms", c.value("lemmas/distance-chain"), cfg.fuzz, t));

    let t = c.runtime("hash-audit/strong-universality");
    let ok = c.all_pass(&["hash-audit/strong-universality/m2", "hash-audit/strong-universality/m3", "hash-audit/strong-universality/m4"]) && t < 10_000.0;
    c.push(2, "strong universality", ok, format!("joint probability exactly 2^-2m for m = 2, 3, 4, {t:.0} ms"));

    let t = c.runtime("hash-audit/extractor");
    let d = c.value("hash-audit/extractor/flat-hmin2");
    let ok = c.all_pass(&["hash-audit/extractor/flat-hmin2"]) && d <= 0.35356 && t < 60_000.0;
    c.push(3, "extractor audit", ok, format!("max distance {d:.6} <= 0.35356, {t:.0} ms"));

    let ok = c.all_pass(&["hash-audit/extractor/lift-mass0.25", "hash-audit/extractor/lift-mass0.5"]);
    c.push(4, "subnormalized lift", ok, format!(
        "max distance {:.6} (mass 1/4), {:.6} (mass 1/2) <= 0.70711",
        c.value("hash-audit/extractor/lift-mass0.25"),
        c.value("hash-audit/extractor/lift-mass0.5")
    ));

    let t = c.runtime("distill/pipeline-bound");
    let ok = c.all_pass(&["distill/pipeline-bound/k5", "distill/pipeline-bound/k6"]) && t < 300_000.0;
    c.push(5, "pipeline bound", ok, format!(
        "max distance {:.6} (k=5), {:.6} (k=6) within eps_verif + eps_pa, {t:.0} ms",
        c.value("distill/pipeline-bound/k5"),
        c.value("distill/pipeline-bound/k6")
    ));

    let v = c.value("hash-audit/verification/t3");
    c.push(6, "verification soundness", c.all_pass(&["hash-audit/verification/t3"]) && v <= 0.125, format!("max accept fraction {v} <= 2^-3"));

    let ok = c.all_pass(&["fsauth/honest-completeness", "fsauth/robustness-exhaustive", "fsauth/robustness-mc"]) && cfg.trials >= 100_000;
    c.push(7, "FS completeness and robustness", ok, format!(
        "honest accept {}, exhaustive reject {}, MC reject {} over {} trials",
        c.value("fsauth/honest-completeness"),
        c.value("fsauth/robustness-exhaustive"),
        c.value("fsauth/robustness-mc"),
        cfg.trials
    ));

    let ok = c.all_pass(&["fsauth/forgery/m2", "fsauth/forgery/m3"]);
    c.push(8, "FS forgery", ok, format!("max acceptance {} (m=2), {} (m=3)", c.value("fsauth/forgery/m2"), c.value("fsauth/forgery/m3")));

    let rs = c.records("fsauth/recycled-entropy/");
    let t = c.runtime("fsauth/recycled-entropy");
    let worst = rs.iter().map(|r| r.value.lo()).fold(f64::INFINITY, f64::min);
    let ok = rs.len() >= 24 && rs.iter().all(|r| r.pass) && t < 600_000.0;
    c.push(9, "recycled-key entropy", ok, format!("{} attacks, min bracket lo {worst:.9} >= k - 1e-6, {t:.0} ms", rs.len()));

    c.push(10, "guessing lemmas", c.all_pass(&["lemmas/guessing/"]), format!("{} violations", c.value("lemmas/guessing/violations")));

    let ok = c.all_pass(&["bounds/key-replacement/pguess", "bounds/key-replacement/k-prime"]);
    c.push(11, "key replacement", ok, format!("pguess {}, k' {}", c.value("bounds/key-replacement/pguess"), c.value("bounds/key-replacement/k-prime")));

    let planted = run_experiment(&ExperimentConfig { suites: vec![Suite::Composition], plant_broken: true, ..cfg.clone() }).expect("composition suite runs");
    let caught = planted.exit_code() == 1 && planted.record("composition/fixture/broken").is_some_and(|r| !r.pass);
    let ok = c.all_pass(&["composition/serial/", "composition/parallel/", "composition/fixture/", "composition/commutation"]) && caught;
    c.push(12, "composition accounting", ok, format!("fixtures within summed epsilon, planted bug {}", if caught { "fails the suite" } else { "NOT caught" }));

    let ok = c.all_pass(&["lemmas/chain-rule", "lemmas/event-conditioning"]);
    c.push(13, "chain rule and event conditioning", ok, format!(
        "{} + {} violations over {} instances each",
        c.value("lemmas/chain-rule"),
        c.value("lemmas/event-conditioning"),
        cfg.fuzz
    ));

    let ok = first.determinism_hash == second.determinism_hash && first.records == second.records;
    c.push(14, "determinism", ok, format!("hash {}", first.determinism_hash));

    let mut all = true;
    for (ok, line) in &c.lines {
        println!("{} {line}", if *ok { "PASS" } else { "FAIL" });
        all &= ok;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
