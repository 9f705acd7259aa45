//! Drives an experiment from a JSON config, as the `topk-ga` binary does,
//! and prints the output manifest.

use topk_ga::harness::{run_config, RunConfig};

const CONFIG: &str = r#"{
  "seed": 42,
  "experiment": {
    "kind": "rho_kappa",
    "generator": {"family": "student_t", "df": 8, "covariance": {"kind": "ar1", "rho": 0.3}, "p": 30},
    "n_ladder": [50, 200],
    "kappa": {"mode": "fixed", "kappa": 2},
    "mc_reps": 500
  }
}"#;

fn main() -> topk_ga::Result<()> {
    let config = RunConfig::from_json(CONFIG)?;
    let out = std::env::temp_dir().join("topk-ga-run-config-example");
    let manifest = run_config(&config, CONFIG, None, &out)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    println!("{}", std::fs::read_to_string(out.join("results.csv"))?);
    Ok(())
}
