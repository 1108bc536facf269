// Runs a scenario from a TOML config the same way the `dicekit` binary does
// and reads back the result record.

use dicekit::cli_io::{config_hash, run_scenario, ScenarioConfig};

const CONFIG: &str = r#"
schema = 1
scenario = "verify-consistency"
d = 2
seed = 17
n = 3
n_max = 3
a = [[0, 0.4], [0.7, 0]]

[measure]
family = "dirichlet-splitting"
eta = [0.5, 1.5]
blocks = [{ members = [1, 2], rate = 1.0 }]
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = ScenarioConfig::parse(CONFIG)?;
    println!("resolved config:\n{}", config.resolve()?.to_canonical_toml()?);
    println!("hash {}", config_hash(&config.resolve()?)?);

    let out = std::env::temp_dir().join(format!("dicekit-scenario-{}", std::process::id()));
    let record = run_scenario(&config.into_scenario()?, &out, false)?;
    println!("verdict {} (exit code {})", record.verdict, record.exit_code());
    println!("metrics {}", record.metrics);
    for entry in std::fs::read_dir(&out)? {
        println!("wrote {}", entry?.file_name().to_string_lossy());
    }
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
