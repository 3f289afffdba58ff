//! Write a synthetic demo dataset (ecg.csv + labs.csv) shaped like a small
//! clinical cohort, for exercising the CLI without real patient data.
//!
//! Usage: cargo run -p kalium --example generate_demo_data -- [DIR] [N] [NOISE_SD] [SEED]

use kalium::pipeline::{generate_synthetic, write_ecg_csv, write_labs_csv};

fn main() -> kalium::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "demo_data".to_string()));
    let n: usize = args.next().map(|a| a.parse().expect("N must be an integer")).unwrap_or(42);
    let noise_sd: f64 = args
        .next()
        .map(|a| a.parse().expect("NOISE_SD must be a number"))
        .unwrap_or(22.0);
    let seed: u64 = args.next().map(|a| a.parse().expect("SEED must be an integer")).unwrap_or(3);

    let (ecgs, labs) = generate_synthetic(n, noise_sd, seed)?;
    std::fs::create_dir_all(&dir).map_err(|e| kalium::Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    write_ecg_csv(&dir.join("ecg.csv"), &ecgs)?;
    write_labs_csv(&dir.join("labs.csv"), &labs)?;
    println!(
        "wrote {} ECG rows and {} lab rows under {}",
        ecgs.len(),
        labs.len(),
        dir.display()
    );
    Ok(())
}
