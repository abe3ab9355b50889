use paflow::accept::{run_criterion, run_suite, suite_criteria, DEFAULT_SEED};
use paflow::hyperbolic::{dtau_dshear_check, dtau_dshear_exact};
use std::process::ExitCode;

type Case = (&'static str, fn() -> Result<(), String>);

// The stated trace derivative is half the derivative of the shear matrices,
// so criterion 7 is expected to fail; see `trace_derivative_off_by_two`.
const KNOWN_FAILING: [usize; 1] = [7];

fn acceptance_criteria() -> Result<(), String> {
    let reports = run_suite("all", DEFAULT_SEED).map_err(|e| e.to_string())?;
    if reports.len() != 11 {
        return Err(format!("expected 11 criteria, got {}", reports.len()));
    }
    for r in &reports {
        println!("{}", r.line());
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} criteria pass", reports.len());
    for r in &reports {
        let expected = !KNOWN_FAILING.contains(&r.id);
        if r.passed() != expected {
            return Err(if expected {
                r.line()
            } else {
                format!("criterion {} now passes; update the known-failing list", r.id)
            });
        }
    }
    Ok(())
}

fn trace_derivative_off_by_two() -> Result<(), String> {
    let r = run_criterion(7, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let (stated, corrected) = (&r.checks[0], &r.checks[1]);
    if stated.passed || stated.residual <= 1e-2 || !corrected.passed {
        return Err(r.line());
    }
    for (a, b, l) in [(-2.0, 0.5, 0.5), (-1.0, 1.0, 2.0), (-0.3, 3.0, 4.0)] {
        let (an, num) = dtau_dshear_check(a, b, l, 0.8).map_err(|e| e.to_string())?;
        if (num / an - 2.0).abs() > 1e-8 || (num - dtau_dshear_exact(a, b, l, 0.8)).abs() > 1e-7 {
            return Err(format!("ratio at ({a}, {b}, {l}) is {}", num / an));
        }
    }
    Ok(())
}

fn suites_partition_the_criteria() -> Result<(), String> {
    let mut all: Vec<usize> = ["tracks", "pa", "symplectic", "hamiltonian", "hyperbolic"]
        .iter()
        .flat_map(|s| suite_criteria(s).unwrap())
        .collect();
    all.sort();
    if all != (1..=11).collect::<Vec<_>>() || suite_criteria("bogus").is_ok() {
        return Err(format!("suites cover {all:?}"));
    }
    Ok(())
}

fn reports_are_deterministic() -> Result<(), String> {
    let a = run_criterion(9, 5).map_err(|e| e.to_string())?;
    let b = run_criterion(9, 5).map_err(|e| e.to_string())?;
    if a.checks[0].residual != b.checks[0].residual {
        return Err("criterion 9 differs between runs".into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let tests: [Case; 4] = [
        ("acceptance_criteria", acceptance_criteria),
        ("trace_derivative_off_by_two", trace_derivative_off_by_two),
        ("suites_partition_the_criteria", suites_partition_the_criteria),
        ("reports_are_deterministic", reports_are_deterministic),
    ];
    let mut failed = 0;
    for (name, f) in tests {
        match f() {
            Ok(()) => println!("test {name} ... ok"),
            Err(e) => {
                println!("test {name} ... FAILED: {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
