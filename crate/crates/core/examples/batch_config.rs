//! Drive the batch commands from a config string, as the `otto-lab` binary does.

use otto_lab::cli::{cmd_flow, cmd_verify};
use otto_lab::config::ExperimentConfig;

const CONFIG: &str = "
potential.kind = double_well
potential.alpha = 1
initial.kind = gaussian
initial.mean = 0
initial.var = 0.25
horizon = 0.5
dt_pde = 1e-4
";

fn main() -> otto_lab::Result<()> {
    let out = std::env::temp_dir().join("otto-lab-batch-example");
    let cfg = ExperimentConfig::parse(CONFIG)?.with_override("output", out.to_str().unwrap())?;
    print!("{}", cfg.to_config_string());

    let diag = cmd_flow(&cfg)?;
    println!("H: {:.5} -> {:.5}", diag.entropy[0], diag.entropy.last().unwrap());

    let report = cmd_verify(&cfg, "de_bruijn", false)?;
    for r in &report.records {
        println!("{:<20} {:<18} rel err {:.2e} {}", r.name, r.context, r.relative_error(), if r.pass { "ok" } else { "FAIL" });
    }
    println!("reports written under {}", out.display());
    Ok(())
}
