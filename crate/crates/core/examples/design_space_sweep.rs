//! Sweeps chips, topologies and memory/network technologies for one
//! workload at 1024 chips and prints the CSV.

use dfmap::dse::{monotonicity_violations, standard_grid, run_grid, sweep_csv, SweepOptions};

fn main() -> dfmap::Result<()> {
    let workload = std::env::args().nth(1).unwrap_or_else(|| "hpl_5m".into());
    let grid = standard_grid(&workload);
    let opts = SweepOptions::default();
    let results = run_grid(&grid, 1, &opts)?;
    print!("{}", sweep_csv(&grid, &results)?);
    let violations = monotonicity_violations(&grid, &results, &opts.catalog);
    eprintln!("{} points, {} monotonicity violations", grid.len(), violations.len());
    Ok(())
}
