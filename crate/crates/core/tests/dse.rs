use dfmap::dse::{
    monotonicity_violations, standard_grid, run_grid, sweep_csv, topology_dims, DesignPoint, SweepOptions, CHIPS, CSV_HEADER,
    TOPOLOGIES,
};
use dfmap::system::Topology;
use dfmap::Error;

#[test]
fn topology_presets_cover_all_chips() {
    for name in TOPOLOGIES {
        let dims = topology_dims(name, 1024, 25e9).unwrap();
        assert_eq!(dims.iter().map(|d| d.size).product::<usize>(), 1024, "{name}");
    }
    let torus = topology_dims("3d_torus", 1024, 1e9).unwrap();
    assert!(torus.iter().all(|d| d.topology == Topology::Ring));
    assert!(matches!(topology_dims("hypercube", 1024, 1e9), Err(Error::UnknownTopology(_))));
    assert!(matches!(topology_dims("dgx2", 24, 1e9), Err(Error::NonFactorable { .. })));
}

#[test]
fn grid_has_eighty_distinct_points() {
    let grid = standard_grid("fft_1t");
    assert_eq!(grid.len(), 80);
    let mut keys: Vec<_> = grid.iter().map(|p| (&p.chip, &p.topology, &p.mem_tech, &p.net_tech)).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 80);
    assert!(CHIPS.iter().all(|c| grid.iter().filter(|p| &p.chip == c).count() == 20));
}

#[test]
fn small_sweep_is_deterministic_and_monotone() {
    let grid: Vec<DesignPoint> = standard_grid("fft_1t").into_iter().filter(|p| p.chip == "H100" || p.chip == "SN30").collect();
    let opts = SweepOptions::default();
    let a = run_grid(&grid, 1, &opts).unwrap();
    let b = run_grid(&grid, 2, &opts).unwrap();
    let csv = sweep_csv(&grid, &a).unwrap();
    assert_eq!(csv, sweep_csv(&grid, &b).unwrap());
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), grid.len() + 1);
    assert!(monotonicity_violations(&grid, &a, &opts.catalog).is_empty());
}

#[test]
fn fixed_parallelism_is_honored() {
    let mut p = DesignPoint::new("dlrm_793b", "TPUv4", "dgx1", "hbm3", "nvlink4");
    p.chips = 64;
    p.parallelism = Some((8, 1, 8));
    let r = run_grid(&[p], 1, &SweepOptions::default()).unwrap().pop().unwrap().unwrap();
    assert_eq!((r.report.n_tp, r.report.n_pp, r.report.n_dp), (8, 1, 8));

    // More pipeline stages than HPL has kernels.
    let mut p = DesignPoint::new("hpl_5m", "TPUv4", "dgx1", "hbm3", "nvlink4");
    p.chips = 64;
    p.parallelism = Some((8, 8, 1));
    assert!(run_grid(&[p], 1, &SweepOptions::default()).unwrap()[0].is_err());
}
