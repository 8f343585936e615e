//! Writes a synthetic mixed-type dataset and its schema.
//!
//! cargo run --example gen_fixture -- <out-dir> [seed]

use std::path::PathBuf;

use axplain::fixtures::{synthetic_dataset, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: gen_fixture <out-dir> [seed]")?);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    std::fs::create_dir_all(&dir)?;
    let ds = synthetic_dataset(&SyntheticSpec::clinical_shaped(seed));
    ds.write_csv(dir.join("data.csv"), "label")?;
    std::fs::write(dir.join("schema.json"), ds.schema.to_json())?;
    let [neg, pos] = ds.class_counts();
    println!(
        "{} rows ({neg} class 0, {pos} class 1) in {}",
        ds.len(),
        dir.display()
    );
    Ok(())
}
