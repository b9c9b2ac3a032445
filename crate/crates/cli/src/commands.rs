//! Subcommand implementations and artifact writing.
//!
//! Every artifact except `run.log` is a pure function of (config, seed,
//! data): reports and CSVs are byte-identical across reruns. Timestamps
//! live only in the sidecar log.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use qnn_core::dataset::{gen_data, LabelRule};
use qnn_core::envgraph::reference_ansatz;
use qnn_core::gradcheck::{
    finite_diff, hessian_closed_form, loss_gradient, second_error_sparsity, second_error_table,
};
use qnn_core::qnn_train::{default_x0, forward_side, train, RoundRecord};
use qnn_core::qsim::{
    loss, predicted_label, readout_observable, reference_circuit, LabeledString, ReadoutAxis,
};
use qnn_core::rqnn_train::{
    read_trace, train_rqnn, verify_trace, write_trace, RqnnRoundRecord,
};
use qnn_core::CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{resolve_dataset, ExperimentConfig, Mode};
use crate::CliError;

pub const METRICS_HEADER: &str = "r,mean_loss,max_abs_grad,clamp_events";

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot encode {}: {e}", path.display())))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Appends a timestamped line to the sidecar log; the only artifact where
/// wall-clock values are allowed.
fn log_line(out: &Path, line: &str) -> Result<(), CliError> {
    let path = out.join("run.log");
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    writeln!(f, "[{}] {line}", unix_ms())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn qnn_metrics_csv(rounds: &[RoundRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rounds {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.r, r.loss, r.max_abs_grad, r.clamp_events
        ));
    }
    s
}

fn rqnn_metrics_csv(rounds: &[RqnnRoundRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rounds {
        // The recurrent update never clamps.
        s.push_str(&format!("{},{},{},0\n", r.r, r.loss, r.max_abs_grad));
    }
    s
}

pub fn cmd_gen_data(
    n: usize,
    count: usize,
    rule: LabelRule,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    ensure_out(out)?;
    let ds = gen_data(n, count, rule, seed).map_err(config_or_runtime)?;
    let path = out.join("dataset.json");
    write_json(&path, &ds)?;
    log_line(out, &format!("gen-data n={n} count={count} seed={seed}"))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Config errors keep exit code 2 even when detected inside the library.
fn config_or_runtime(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidInput(_) | CoreError::InvalidObservable(_) => {
            CliError::Config(e.to_string())
        }
        CoreError::CorruptTrace(_) => CliError::Corrupt(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    expected_mode: Mode,
    seed: u64,
    data: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    if cfg.mode != expected_mode {
        return Err(CliError::Config(format!(
            "config mode is {} but the subcommand trains {expected_mode}",
            cfg.mode
        )));
    }
    ensure_out(out)?;
    let dataset = resolve_dataset(cfg.n, data)?;
    let thetas = cfg.initial_thetas(seed);
    log_line(out, &format!("train-{} seed={seed} start", cfg.mode))?;

    write_file(&out.join("config.json"), cfg.canonical_json().as_bytes())?;
    match cfg.mode {
        Mode::Qnn => {
            let graph =
                reference_ansatz(cfg.n, cfg.ansatz.layers, &thetas).map_err(config_or_runtime)?;
            let report = train(&graph, &dataset, &cfg.qnn_train_config(seed))
                .map_err(config_or_runtime)?;
            write_json(&out.join("report.json"), &report)?;
            write_file(
                &out.join("metrics.csv"),
                qnn_metrics_csv(&report.rounds).as_bytes(),
            )?;
        }
        Mode::Rqnn => {
            let circuit =
                reference_circuit(cfg.n, cfg.ansatz.layers).map_err(config_or_runtime)?;
            let (report, trace) =
                train_rqnn(&circuit, &thetas, &dataset, &cfg.rqnn_train_config(seed))
                    .map_err(config_or_runtime)?;
            write_json(&out.join("report.json"), &report)?;
            write_file(
                &out.join("metrics.csv"),
                rqnn_metrics_csv(&report.rounds).as_bytes(),
            )?;
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).map_err(config_or_runtime)?;
            write_file(&out.join("trace.jsonl"), &buf)?;
        }
    }
    log_line(out, "train done")?;
    println!(
        "wrote report.json and metrics.csv ({} rounds) to {}",
        cfg.rounds,
        out.display()
    );
    Ok(())
}

pub fn cmd_replay(trace_path: &Path) -> Result<(), CliError> {
    let file = fs::File::open(trace_path)
        .map_err(|e| CliError::Corrupt(format!("cannot open {}: {e}", trace_path.display())))?;
    let trace = read_trace(std::io::BufReader::new(file)).map_err(config_or_runtime)?;
    let outcome = verify_trace(&trace);
    if outcome.pass {
        println!(
            "PASS: trace verifies bit-identically over {} rounds",
            trace.rounds.len()
        );
        Ok(())
    } else {
        Err(CliError::Verify(outcome.failures.join("\n")))
    }
}

#[derive(Serialize)]
struct GradcheckReport {
    cases: usize,
    max_grad_dev: f64,
    max_hess_dev: f64,
    sparsity_ok: bool,
}

pub fn cmd_gradcheck(seed: u64, cases: usize, out: &Path) -> Result<(), CliError> {
    ensure_out(out)?;
    let report = run_gradcheck(seed, cases).map_err(config_or_runtime)?;
    write_json(&out.join("gradcheck.json"), &report)?;
    log_line(out, &format!("gradcheck seed={seed} cases={cases}"))?;
    println!(
        "gradcheck over {} cases: max_grad_dev {:e}, max_hess_dev {:e}, sparsity_ok {}",
        report.cases, report.max_grad_dev, report.max_hess_dev, report.sparsity_ok
    );
    Ok(())
}

fn run_gradcheck(seed: u64, cases: usize) -> qnn_core::Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_grad_dev = 0.0f64;

    // Parameter-shift derivatives of the quantum loss against central
    // differences on random reference circuits.
    for _ in 0..cases {
        let n = rng.gen_range(1..=3);
        let circuit = reference_circuit(n, 1)?;
        let thetas: Vec<f64> = (0..circuit.len())
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        let z: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        let label: i8 = if rng.gen::<bool>() { 1 } else { -1 };
        let item = LabeledString::new(z.clone(), label)?;
        let obs = readout_observable(n, ReadoutAxis::Z)?;
        let shift_grad = loss_gradient(&circuit, &thetas, &item, &obs)?;
        for i in 0..thetas.len() {
            let f = |t: &[f64]| {
                let ltilde = predicted_label(&circuit, t, &z, &obs)?;
                Ok(loss(label, ltilde))
            };
            let fd = finite_diff(f, &thetas, i, 1e-5)?;
            max_grad_dev = max_grad_dev.max((fd - shift_grad[i]).abs());
        }
    }

    // Closed-form second derivatives of the side surrogate against central
    // second differences on random chains with one skip arc.
    let mut max_hess_dev = 0.0f64;
    let mut sparsity_ok = true;
    for _ in 0..cases {
        let l = rng.gen_range(2..=4);
        let thetas: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let paulis = (0..l)
            .map(|_| qnn_core::qsim::PauliString::single(2, 1, qnn_core::qsim::Pauli::X))
            .collect::<qnn_core::Result<Vec<_>>>()?;
        let g = qnn_core::envgraph::EnvGraph::chain(1, paulis, &thetas)?;
        let x0 = rng.gen_range(-1.0..1.0);
        let y = rng.gen_range(-1.0..1.0);
        let side = forward_side(&g, x0)?;
        let table = hessian_closed_form(&g, &side, y)?;
        let arcs: Vec<(usize, usize)> = g.arcs().map(|a| (a.from, a.to)).collect();
        let h = 2e-3;
        let surrogate = |gr: &qnn_core::envgraph::EnvGraph| -> qnn_core::Result<f64> {
            let s = forward_side(gr, x0)?;
            let v = *s.v.last().expect("nonempty");
            Ok((v - y) * (v - y) / 2.0)
        };
        for &a in &arcs {
            for &b in &arcs {
                let ta = g.theta(a.0, a.1)?;
                let tb = g.theta(b.0, b.1)?;
                let fd = if a == b {
                    let fp = surrogate(&g.with_arc_theta(a.0, a.1, ta + h)?)?;
                    let f0 = surrogate(&g)?;
                    let fm = surrogate(&g.with_arc_theta(a.0, a.1, ta - h)?)?;
                    (fp - 2.0 * f0 + fm) / (h * h)
                } else {
                    let at = |da: f64, db: f64| -> qnn_core::Result<f64> {
                        surrogate(
                            &g.with_arc_theta(a.0, a.1, ta + da)?
                                .with_arc_theta(b.0, b.1, tb + db)?,
                        )
                    };
                    (at(h, h)? - at(h, -h)? - at(-h, h)? + at(-h, -h)?) / (4.0 * h * h)
                };
                let closed = table.get(a, b).expect("entry for arc pair");
                max_hess_dev = max_hess_dev.max((fd - closed).abs() / fd.abs().max(1.0));
            }
        }
        let se = second_error_table(&g);
        sparsity_ok &= second_error_sparsity(&g, &se).pass;
    }

    Ok(GradcheckReport {
        cases,
        max_grad_dev,
        max_hess_dev,
        sparsity_ok,
    })
}

#[derive(Serialize)]
struct HessianEntry {
    from_a: usize,
    to_a: usize,
    from_b: usize,
    to_b: usize,
    value: f64,
}

#[derive(Serialize)]
struct HessianReport {
    entries: Vec<HessianEntry>,
    max_asymmetry: f64,
    sparsity_ok: bool,
    x0: f64,
    y: f64,
}

pub fn cmd_hessian(
    cfg: &ExperimentConfig,
    seed: u64,
    data: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    ensure_out(out)?;
    let thetas = cfg.initial_thetas(seed);
    let graph = reference_ansatz(cfg.n, cfg.ansatz.layers, &thetas).map_err(config_or_runtime)?;
    // Surrogate inputs: the first dataset item when data is given, else the
    // all-ones string with target -1.
    let (x0, y) = match data {
        Some(path) => {
            let ds = resolve_dataset(cfg.n, Some(path))?;
            let item = &ds.items[0];
            (
                cfg.x0_override.unwrap_or_else(|| default_x0(&item.z)),
                f64::from(item.label),
            )
        }
        None => (
            cfg.x0_override
                .unwrap_or_else(|| default_x0(&vec![1i8; cfg.n])),
            -1.0,
        ),
    };
    let side = forward_side(&graph, x0).map_err(config_or_runtime)?;
    let table = hessian_closed_form(&graph, &side, y).map_err(config_or_runtime)?;
    let se = second_error_table(&graph);
    let report = HessianReport {
        entries: table
            .iter()
            .map(|((a, b), value)| HessianEntry {
                from_a: a.0,
                to_a: a.1,
                from_b: b.0,
                to_b: b.1,
                value,
            })
            .collect(),
        max_asymmetry: table.max_asymmetry(),
        sparsity_ok: second_error_sparsity(&graph, &se).pass,
        x0,
        y,
    };
    write_json(&out.join("hessian.json"), &report)?;
    log_line(out, &format!("hessian seed={seed}"))?;
    println!(
        "wrote hessian.json ({} entries) to {}",
        report.entries.len(),
        out.display()
    );
    Ok(())
}
