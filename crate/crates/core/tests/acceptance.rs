//! End-to-end acceptance suite: each test runs one built-in preset in-process
//! at full size and prints a single PASS/FAIL line.

use skewflow::cli::{execute, preset, RunOutcome};
use skewflow::report::CheckReport;
use skewflow::sde::with_workers;

fn run(name: &str) -> RunOutcome {
    let cfg = preset(name).unwrap_or_else(|| panic!("missing preset {name}"));
    execute(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn describe(c: &CheckReport) -> String {
    if c.parts.is_empty() {
        let op = if matches!(c.comparison, skewflow::report::Comparison::AtMost) { "<=" } else { ">=" };
        let is_range = c.parameters.get("lo").is_some() && c.parameters.get("hi").is_some();
        let value = c.parameters.get("value").and_then(|v| v.as_f64()).filter(|_| is_range);
        match value {
            Some(v) => format!("{} = {v:.4}, outside by {:.4} {op} {:.4}", c.check, c.statistic, c.threshold),
            None => format!("{} {:.4} {op} {:.4}", c.check, c.statistic, c.threshold),
        }
    } else {
        let failing: Vec<String> = c.parts.iter().filter(|p| !p.pass).map(describe).collect();
        if failing.is_empty() {
            format!("{} ({} parts ok)", c.check, c.parts.len())
        } else {
            format!("{} [{}]", c.check, failing.join("; "))
        }
    }
}

fn report(k: usize, what: &str, out: &RunOutcome) {
    let details: Vec<String> = out
        .items
        .iter()
        .flat_map(|i| i.checks.iter().map(move |c| format!("{}: {}", i.label, describe(c))))
        .collect();
    let verdict = if out.pass { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {k}: {what} | {}", details.join(" | "));
    assert!(out.pass, "criterion {k} failed:\n{}", out.summary_json);
}

fn criterion(k: usize, what: &str) {
    let out = run(&format!("acceptance-{k}"));
    report(k, what, &out);
}

#[test]
fn criterion_01_skew_endpoint_law() {
    criterion(1, "skew occupation fraction and KS against the skew BM law");
}

#[test]
fn criterion_02_bessel_moments() {
    criterion(2, "second moments 5, 3, 4 within 2%");
}

#[test]
fn criterion_03_local_time_and_revuz() {
    criterion(3, "Tanaka and occupation local times, discounted Revuz functional");
}

#[test]
fn criterion_04_conservativeness() {
    criterion(4, "no killed or failed paths");
}

#[test]
fn criterion_05_symmetry() {
    criterion(5, "bilinear forms agree within 3%");
}

#[test]
fn criterion_06_newton_potential() {
    criterion(6, "Newtonian potential of the unit ball");
}

#[test]
fn criterion_07_a2_products() {
    criterion(7, "bounded A2 products for alpha=1, growth for alpha=3.5");
}

#[test]
fn criterion_08_resolvent_envelope() {
    criterion(8, "envelope constants stable within 20%, sandwich holds");
}

#[test]
fn criterion_09_reflected_ball() {
    criterion(9, "radial chi-square against the uniform law, boundary ledger");
}

#[test]
fn criterion_10_feller() {
    criterion(10, "error trend as t decreases, far field below 1e-6");
}

#[test]
fn criterion_11_determinism() {
    let cfg = preset("acceptance-11").unwrap();
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    let one = with_workers(1, || execute(&cfg)).unwrap().unwrap();
    let four = with_workers(4, || execute(&cfg)).unwrap().unwrap();
    let same_runs = a.summary_json == b.summary_json;
    let same_workers = one.summary_json == four.summary_json && one.summary_json == a.summary_json;
    let ok = same_runs && same_workers && a.pass;
    println!(
        "{} criterion 11: byte-identical summaries | repeat: {same_runs} | workers 1 vs 4: {same_workers} | {} bytes",
        if ok { "PASS" } else { "FAIL" },
        a.summary_json.len()
    );
    assert!(ok);
}
