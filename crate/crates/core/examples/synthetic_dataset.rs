//! Writes the synthetic fixture set used by tests and the CLI walkthrough:
//! historical forcing, a simulated observation panel with manifest, and
//! future forcing scenarios.
//!
//! Usage: cargo run -p ebmss-core --example synthetic_dataset -- <out_dir>

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ebmss::model::{EbmParamVector, MeasurementConfig};
use ebmss::simulation::{simulate_dgp, SimulationInputs};

const FIRST: i32 = 1955;
const LAST: i32 = 2020;
const SEED: u64 = 2020;

/// Eruption year and peak forcing (W m-2).
const ERUPTIONS: [(i32, f64); 3] = [(1963, -1.6), (1982, -1.4), (1991, -2.8)];

fn natural(year: i32) -> f64 {
    let solar = 0.1 * (2.0 * PI * (year - 1958) as f64 / 11.0).cos();
    let volcanic: f64 = ERUPTIONS
        .iter()
        .filter(|(y, _)| year >= *y)
        .map(|(y, peak)| peak * (-((year - y) as f64) / 1.2).exp())
        .sum();
    solar + volcanic
}

fn anthropogenic(year: i32) -> f64 {
    let x = (year - FIRST) as f64;
    0.5 + 0.02 * x + 0.00022 * x * x
}

/// Future total forcing ending near `target` in 2100; the lowest pathway
/// peaks around 2040 and declines.
fn scenario(year: i32, start: f64, target: f64, peaking: bool) -> f64 {
    let s = (year - LAST) as f64 / 80.0;
    let solar = 0.1 * (2.0 * PI * (year - 1958) as f64 / 11.0).cos();
    let path = if peaking {
        start + (target - start) * s + 1.6 * s * (1.0 - s).powi(2)
    } else {
        start + (target - start) * s.powf(1.3)
    };
    path + solar
}

/// Pre-industrial offsets of six GMST products: (mean 1986-2005, warming of
/// 1986-2005 over pre-industrial).
const GMST_BASELINES: [(f64, f64); 6] = [
    (0.420, 0.65),
    (0.445, 0.62),
    (0.349, 0.60),
    (0.382, 0.73),
    (0.305, 0.65),
    (0.014, 0.59),
];

/// First observed year per GMST series (later starts leave gaps).
const GMST_START: [i32; 8] = [1955, 1955, 1955, 1955, 1955, 1955, 1960, 1970];

fn series_csv(years: &[i32], values: &[Option<f64>]) -> String {
    let mut out = String::from("year,value\n");
    for (y, v) in years.iter().zip(values) {
        match v {
            Some(v) => writeln!(out, "{y},{v:.6}").unwrap(),
            None => writeln!(out, "{y},").unwrap(),
        }
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into());
    let out = Path::new(&out);
    fs::create_dir_all(out.join("series"))?;
    fs::create_dir_all(out.join("scenarios"))?;

    let years: Vec<i32> = (FIRST..=LAST).collect();
    let nat: Vec<f64> = years.iter().map(|&y| natural(y)).collect();
    let anthro: Vec<f64> = years.iter().map(|&y| anthropogenic(y)).collect();
    let mut forcing = String::from("year,natural,anthropogenic\n");
    for i in 0..years.len() {
        writeln!(forcing, "{},{:.6},{:.6}", years[i], nat[i], anthro[i])?;
    }
    fs::write(out.join("forcing.csv"), forcing)?;

    let params = EbmParamVector::reference_dgp();
    let config = MeasurementConfig::new(8, 2);
    let inputs = SimulationInputs::new(years.clone(), nat.clone(), anthro.clone())?;
    let sim = simulate_dgp(&params, &config, &inputs, SEED)?;
    let panel = &sim.data.panel;

    let header = "# Synthetic panel simulated from the reference parameter values.\n\
                  # Not observational data.\n\n";
    let mut manifest = String::from(header);
    // One GMST product and the first ocean pair.
    let mut base = String::from(header);
    for (i, meta) in panel.meta().iter().enumerate() {
        let mut row = panel.row(i);
        let mut sync = String::new();
        if i < 8 {
            for (t, y) in years.iter().enumerate() {
                if *y < GMST_START[i] {
                    row[t] = None;
                }
            }
            if let Some(&(mean, delta)) = GMST_BASELINES.get(i) {
                // Store on the product's own baseline; sync undoes the shift.
                let offset = mean - delta;
                row.iter_mut().flatten().for_each(|v| *v += offset);
                sync = format!(
                    "sync = {{ mode = \"preindustrial\", mean_1986_2005 = {mean}, delta_preind = {delta} }}\n"
                );
            }
        }
        let file = format!("series/{}.csv", meta.label);
        fs::write(out.join(&file), series_csv(&years, &row))?;
        let mut entry = String::new();
        writeln!(entry, "[[series]]")?;
        writeln!(entry, "label = \"{}\"", meta.label)?;
        writeln!(entry, "kind = \"{}\"", meta.kind.as_str())?;
        writeln!(entry, "file = \"{file}\"")?;
        if let Some(p) = &meta.pair_id {
            writeln!(entry, "pair_id = \"{p}\"")?;
        }
        entry.push_str(&sync);
        entry.push('\n');
        manifest.push_str(&entry);
        let in_base = match &meta.pair_id {
            Some(p) => *p == panel.meta()[8].pair_id.clone().unwrap_or_default(),
            None => i == 0 || i == panel.n_series() - 1,
        };
        if in_base {
            base.push_str(&entry);
        }
    }
    let natural =
        "[[series]]\nlabel = \"forcing_natural\"\nkind = \"forcing_natural\"\nfile = \"forcing.csv\"\ncolumn = \"natural\"\n";
    manifest.push_str(natural);
    base.push_str(natural);
    fs::write(out.join("manifest.toml"), manifest)?;
    fs::write(out.join("manifest_base.toml"), base)?;

    let start = nat[nat.len() - 1] + anthro[anthro.len() - 1];
    for (name, target, peaking) in [
        ("pathway_2p6", 2.6, true),
        ("pathway_4p5", 4.5, false),
        ("pathway_6p0", 6.0, false),
        ("pathway_8p5", 8.5, false),
    ] {
        let mut csv = String::from("year,forcing\n");
        for y in LAST + 1..=2100 {
            writeln!(csv, "{y},{:.6}", scenario(y, start, target, peaking))?;
        }
        fs::write(out.join("scenarios").join(format!("{name}.csv")), csv)?;
    }
    println!("wrote synthetic fixtures to {}", out.display());
    Ok(())
}
