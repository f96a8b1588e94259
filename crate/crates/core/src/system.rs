//! System description: chip resources, the hierarchically composed
//! interconnect, the TP/PP/DP assignment of network dimensions, and the
//! memory/interconnect technology catalogs used for price and power.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TERA: f64 = 1e12;
pub const GIGA: f64 = 1e9;
pub const MEGA: f64 = 1e6;

/// Lower clamp of the power regression, in kW.
pub const POWER_FLOOR_KW: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSpec {
    pub name: String,
    /// Compute tiles per chip.
    pub t_lim: u64,
    /// Throughput of one tile, FLOP/s.
    pub t_flop: f64,
    /// On-chip SRAM capacity, bytes.
    pub s_cap: f64,
    /// DRAM capacity, bytes.
    pub d_cap: f64,
    /// DRAM bandwidth, bytes/s.
    pub d_bw: f64,
    /// Compute grid of a single tile (rows, cols), used by the tiling-efficiency model.
    #[serde(default = "default_tile_shape")]
    pub tile_shape: (u64, u64),
    #[serde(default)]
    pub power_w: Option<f64>,
    #[serde(default)]
    pub price_usd: Option<f64>,
}

fn default_tile_shape() -> (u64, u64) {
    (32, 32)
}

impl ChipSpec {
    pub fn peak_flops(&self) -> f64 {
        self.t_lim as f64 * self.t_flop
    }

    /// Measured power when the catalog has it, otherwise the regression curve.
    pub fn power_watts(&self) -> f64 {
        self.power_w.unwrap_or_else(|| chip_power(self.peak_flops() / TERA) * 1e3)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_flop", self.t_flop),
            ("s_cap", self.s_cap),
            ("d_cap", self.d_cap),
            ("d_bw", self.d_bw),
        ];
        if self.t_lim == 0 {
            return Err(Error::Validation(format!("chip {}: t_lim must be > 0", self.name)));
        }
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("chip {}: {field} must be > 0, got {v}", self.name)));
            }
        }
        for (field, v) in [("power_w", self.power_w), ("price_usd", self.price_usd)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Validation(format!("chip {}: {field} must be > 0, got {v}", self.name)));
                }
            }
        }
        if self.tile_shape.0 == 0 || self.tile_shape.1 == 0 {
            return Err(Error::Validation(format!("chip {}: tile_shape must be nonzero", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    FullyConnected,
    Switch,
}

impl Topology {
    /// Physical links in one instance of a dimension of `size` chips.
    pub fn links(self, size: usize) -> usize {
        if size <= 1 {
            return 0;
        }
        match self {
            Topology::Ring => size,
            Topology::FullyConnected => size * (size - 1) / 2,
            Topology::Switch => size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkDim {
    pub topology: Topology,
    pub size: usize,
    /// Bytes/s per link.
    pub link_bw: f64,
    /// Seconds per hop.
    #[serde(default)]
    pub hop_latency: f64,
}

impl NetworkDim {
    pub fn new(topology: Topology, size: usize, link_bw: f64) -> Self {
        NetworkDim { topology, size, link_bw, hop_latency: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Tp,
    Pp,
    Dp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTech {
    pub bandwidth: f64,
    pub price_per_gb: f64,
    pub power_per_gb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkTech {
    pub bandwidth: f64,
    pub price_per_link: f64,
    pub power_per_link: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechCatalog {
    pub memory: BTreeMap<String, MemoryTech>,
    pub interconnect: BTreeMap<String, LinkTech>,
}

impl Default for TechCatalog {
    /// Bandwidths are the published figures; prices and power are rough
    /// public estimates and should be overridden for real cost studies.
    fn default() -> Self {
        let memory = BTreeMap::from([
            ("ddr4".to_string(), MemoryTech { bandwidth: 200.0 * GIGA, price_per_gb: 5.0, power_per_gb: 0.4 }),
            ("hbm3".to_string(), MemoryTech { bandwidth: 3000.0 * GIGA, price_per_gb: 20.0, power_per_gb: 0.6 }),
        ]);
        let interconnect = BTreeMap::from([
            ("pcie4".to_string(), LinkTech { bandwidth: 25.0 * GIGA, price_per_link: 50.0, power_per_link: 5.0 }),
            ("nvlink4".to_string(), LinkTech { bandwidth: 900.0 * GIGA, price_per_link: 1000.0, power_per_link: 30.0 }),
        ]);
        TechCatalog { memory, interconnect }
    }
}

impl TechCatalog {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in &self.memory {
            if !(m.bandwidth > 0.0) {
                return Err(Error::Validation(format!("memory tech {name}: bandwidth must be > 0")));
            }
        }
        for (name, l) in &self.interconnect {
            if !(l.bandwidth > 0.0) {
                return Err(Error::Validation(format!("interconnect tech {name}: bandwidth must be > 0")));
            }
        }
        Ok(())
    }

    pub fn memory(&self, name: &str) -> Result<&MemoryTech> {
        self.memory.get(name).ok_or_else(|| Error::MissingCatalogEntry(format!("memory/{name}")))
    }

    pub fn interconnect(&self, name: &str) -> Result<&LinkTech> {
        self.interconnect.get(name).ok_or_else(|| Error::MissingCatalogEntry(format!("interconnect/{name}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechChoice {
    pub memory: String,
    pub interconnect: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSpec {
    pub chip: ChipSpec,
    pub dims: Vec<NetworkDim>,
    pub tp_dims: Vec<usize>,
    pub pp_dims: Vec<usize>,
    pub dp_dims: Vec<usize>,
    pub n_tp: usize,
    pub n_pp: usize,
    pub n_dp: usize,
    pub tech: Option<TechChoice>,
}

impl SystemSpec {
    /// Builds and validates a system; every dimension must be owned by
    /// exactly one strategy, and a strategy may own several dimensions.
    pub fn new(
        chip: ChipSpec,
        dims: Vec<NetworkDim>,
        tp_dims: Vec<usize>,
        pp_dims: Vec<usize>,
        dp_dims: Vec<usize>,
    ) -> Result<Self> {
        let size = |ids: &[usize]| ids.iter().map(|&i| dims.get(i).map_or(1, |d| d.size)).product::<usize>();
        let sys = SystemSpec {
            n_tp: size(&tp_dims),
            n_pp: size(&pp_dims),
            n_dp: size(&dp_dims),
            chip,
            dims,
            tp_dims,
            pp_dims,
            dp_dims,
            tech: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// One chip, no network.
    pub fn single_chip(chip: ChipSpec) -> Self {
        SystemSpec {
            chip,
            dims: Vec::new(),
            tp_dims: Vec::new(),
            pp_dims: Vec::new(),
            dp_dims: Vec::new(),
            n_tp: 1,
            n_pp: 1,
            n_dp: 1,
            tech: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chip.validate()?;
        for (i, d) in self.dims.iter().enumerate() {
            if d.size == 0 {
                return Err(Error::Validation(format!("dim {i}: size must be >= 1")));
            }
            if !(d.link_bw > 0.0) {
                return Err(Error::Validation(format!("dim {i}: link_bw must be > 0")));
            }
            if d.hop_latency < 0.0 {
                return Err(Error::Validation(format!("dim {i}: hop_latency must be >= 0")));
            }
        }
        let mut owner: Vec<Option<Strategy>> = vec![None; self.dims.len()];
        for (strategy, ids) in [(Strategy::Tp, &self.tp_dims), (Strategy::Pp, &self.pp_dims), (Strategy::Dp, &self.dp_dims)] {
            for &i in ids {
                let slot = owner
                    .get_mut(i)
                    .ok_or_else(|| Error::Validation(format!("{strategy:?} assigned to missing dim {i}")))?;
                if let Some(prev) = slot {
                    return Err(Error::Validation(format!(
                        "dim {i} assigned to both {prev:?} and {strategy:?}; a dimension cannot be subdivided"
                    )));
                }
                *slot = Some(strategy);
            }
        }
        let total: usize = self.dims.iter().map(|d| d.size).product();
        if self.n_tp * self.n_pp * self.n_dp != total {
            return Err(Error::Validation(format!(
                "dim-size mismatch: n_tp*n_pp*n_dp = {}*{}*{} but dims multiply to {total}",
                self.n_tp, self.n_pp, self.n_dp
            )));
        }
        for (name, ids, n) in [("n_tp", &self.tp_dims, self.n_tp), ("n_pp", &self.pp_dims, self.n_pp), ("n_dp", &self.dp_dims, self.n_dp)] {
            let size: usize = ids.iter().map(|&i| self.dims[i].size).product();
            if size != n {
                return Err(Error::Validation(format!("dim-size mismatch: {name} = {n} but its dims multiply to {size}")));
            }
        }
        Ok(())
    }

    pub fn total_chips(&self) -> usize {
        self.n_tp * self.n_pp * self.n_dp
    }

    fn select(&self, ids: &[usize]) -> Vec<NetworkDim> {
        ids.iter().map(|&i| self.dims[i]).collect()
    }

    pub fn tp_network(&self) -> Vec<NetworkDim> {
        self.select(&self.tp_dims)
    }

    pub fn pp_network(&self) -> Vec<NetworkDim> {
        self.select(&self.pp_dims)
    }

    pub fn dp_network(&self) -> Vec<NetworkDim> {
        self.select(&self.dp_dims)
    }

    /// Bandwidth used for point-to-point transfers between pipeline stages.
    pub fn pp_bandwidth(&self) -> f64 {
        self.pp_network()
            .iter()
            .filter(|d| d.size > 1)
            .map(|d| d.link_bw)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn pp_latency(&self) -> f64 {
        self.pp_network().iter().filter(|d| d.size > 1).map(|d| d.hop_latency).fold(0.0, f64::max)
    }

    /// Slowest link bandwidth in the system (infinite for a single chip).
    pub fn min_link_bw(&self) -> f64 {
        self.dims.iter().filter(|d| d.size > 1).map(|d| d.link_bw).fold(f64::INFINITY, f64::min)
    }

    pub fn total_links(&self) -> usize {
        let total = self.total_chips();
        self.dims.iter().map(|d| (total / d.size.max(1)) * d.topology.links(d.size)).sum()
    }
}

/// On-disk system description.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SystemFile {
    pub chip: ChipRef,
    #[serde(default)]
    pub dims: Vec<DimFile>,
    #[serde(default)]
    pub assign: AssignFile,
    #[serde(default)]
    pub tech: Option<TechChoice>,
    #[serde(default)]
    pub catalog: Option<TechCatalog>,
    #[serde(default)]
    pub n_tp: Option<usize>,
    #[serde(default)]
    pub n_pp: Option<usize>,
    #[serde(default)]
    pub n_dp: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ChipRef {
    Preset(String),
    Inline(PartialChip),
}

/// A chip entry whose bandwidth may come from the memory technology.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PartialChip {
    pub name: String,
    pub t_lim: u64,
    pub t_flop: f64,
    pub s_cap: f64,
    pub d_cap: f64,
    #[serde(default)]
    pub d_bw: Option<f64>,
    #[serde(default = "default_tile_shape")]
    pub tile_shape: (u64, u64),
    #[serde(default)]
    pub power_w: Option<f64>,
    #[serde(default)]
    pub price_usd: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct DimFile {
    pub topology: Topology,
    pub size: usize,
    #[serde(default)]
    pub link_bw: Option<f64>,
    #[serde(default)]
    pub hop_latency: f64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
pub struct AssignFile {
    #[serde(default)]
    pub tp: DimSel,
    #[serde(default)]
    pub pp: DimSel,
    #[serde(default)]
    pub dp: DimSel,
}

/// `null`, a single dimension index, or a list of indices.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DimSel {
    #[default]
    None,
    One(usize),
    Many(Vec<usize>),
}

impl DimSel {
    fn ids(&self) -> Vec<usize> {
        match self {
            DimSel::None => Vec::new(),
            DimSel::One(i) => vec![*i],
            DimSel::Many(v) => v.clone(),
        }
    }
}

impl SystemFile {
    pub fn resolve(self) -> Result<(SystemSpec, TechCatalog)> {
        let catalog = self.catalog.unwrap_or_default();
        catalog.validate()?;
        let mem_bw = match &self.tech {
            Some(t) => Some(catalog.memory(&t.memory)?.bandwidth),
            None => None,
        };
        let link_bw = match &self.tech {
            Some(t) => Some(catalog.interconnect(&t.interconnect)?.bandwidth),
            None => None,
        };
        let chip = match self.chip {
            ChipRef::Preset(name) => {
                let mut chip = chip_preset(&name)?;
                if let Some(bw) = mem_bw {
                    chip.d_bw = bw;
                }
                chip
            }
            ChipRef::Inline(p) => ChipSpec {
                d_bw: p
                    .d_bw
                    .or(mem_bw)
                    .ok_or_else(|| Error::Validation(format!("chip {}: d_bw missing and no memory tech given", p.name)))?,
                name: p.name,
                t_lim: p.t_lim,
                t_flop: p.t_flop,
                s_cap: p.s_cap,
                d_cap: p.d_cap,
                tile_shape: p.tile_shape,
                power_w: p.power_w,
                price_usd: p.price_usd,
            },
        };
        let dims = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let bw = d
                    .link_bw
                    .or(link_bw)
                    .ok_or_else(|| Error::Validation(format!("dim {i}: link_bw missing and no interconnect tech given")))?;
                Ok(NetworkDim { topology: d.topology, size: d.size, link_bw: bw, hop_latency: d.hop_latency })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sys = SystemSpec::new(chip, dims, self.assign.tp.ids(), self.assign.pp.ids(), self.assign.dp.ids())?;
        for (name, declared, actual) in [("n_tp", self.n_tp, sys.n_tp), ("n_pp", self.n_pp, sys.n_pp), ("n_dp", self.n_dp, sys.n_dp)] {
            if let Some(d) = declared {
                if d != actual {
                    return Err(Error::Validation(format!(
                        "dim-size mismatch: declared {name} = {d} but assigned dims give {actual}"
                    )));
                }
            }
        }
        sys.tech = self.tech;
        Ok((sys, catalog))
    }
}

pub fn parse_system(text: &str) -> Result<(SystemSpec, TechCatalog)> {
    let file: SystemFile =
        serde_json::from_str(text).map_err(|e| Error::Parse { what: "system".into(), message: e.to_string() })?;
    file.resolve()
}

pub fn load_system(path: impl AsRef<Path>) -> Result<SystemSpec> {
    load_system_with_catalog(path).map(|(s, _)| s)
}

pub fn load_system_with_catalog(path: impl AsRef<Path>) -> Result<(SystemSpec, TechCatalog)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_system(&text)
}

/// Silicon power regression: X in TFLOPS, result in kW, clamped at
/// [`POWER_FLOOR_KW`] where the parabola dips below zero.
pub fn chip_power(peak_tflops: f64) -> f64 {
    let x = peak_tflops.max(0.0);
    (3e-7 * x * x - 4.3e-4 * x + 0.04).max(POWER_FLOOR_KW)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPower {
    pub price_usd: f64,
    pub power_w: f64,
}

pub fn system_cost_power(sys: &SystemSpec, catalog: &TechCatalog) -> Result<CostPower> {
    let chips = sys.total_chips() as f64;
    let chip_price = sys
        .chip
        .price_usd
        .ok_or_else(|| Error::MissingCatalogEntry(format!("price of chip {}", sys.chip.name)))?;
    let (mem_price, mem_power) = match &sys.tech {
        Some(t) => {
            let m = catalog.memory(&t.memory)?;
            (m.price_per_gb, m.power_per_gb)
        }
        None => (0.0, 0.0),
    };
    let links = sys.total_links() as f64;
    let (link_price, link_power) = match &sys.tech {
        Some(t) if links > 0.0 => {
            let l = catalog.interconnect(&t.interconnect)?;
            (l.price_per_link, l.power_per_link)
        }
        _ => (0.0, 0.0),
    };
    let cap_gb = sys.chip.d_cap / GIGA;
    Ok(CostPower {
        price_usd: chips * (chip_price + mem_price * cap_gb) + links * link_price,
        power_w: chips * (sys.chip.power_watts() + mem_power * cap_gb) + links * link_power,
    })
}

fn chip(name: &str, peak_tflops: f64, t_lim: u64, sram: f64, dram_cap: f64, dram_bw: f64, tile: (u64, u64), power_w: f64, price: f64) -> ChipSpec {
    ChipSpec {
        name: name.into(),
        t_lim,
        t_flop: peak_tflops * TERA / t_lim as f64,
        s_cap: sram,
        d_cap: dram_cap,
        d_bw: dram_bw,
        tile_shape: tile,
        power_w: Some(power_w),
        price_usd: Some(price),
    }
}

/// The four accelerators of the design-space study. Peak throughput and SRAM
/// are the published figures; tile counts, DRAM, power and price are estimates.
pub fn builtin_chips() -> Vec<ChipSpec> {
    vec![
        chip("H100", 993.0, 132, 113.0 * MEGA, 80.0 * GIGA, 3000.0 * GIGA, (64, 64), 700.0, 30_000.0),
        chip("TPUv4", 275.0, 8, 160.0 * MEGA, 32.0 * GIGA, 1200.0 * GIGA, (128, 128), 192.0, 8_000.0),
        chip("SN30", 614.0, 1280, 640.0 * MEGA, 1024.0 * GIGA, 200.0 * GIGA, (32, 16), 1_000.0, 20_000.0),
        chip("WSE-2", 7500.0, 850_000, 40.0 * GIGA, 1200.0 * GIGA, 200.0 * GIGA, (1, 1), 15_000.0, 2_500_000.0),
    ]
}

/// Eight-chip dataflow accelerator used by the mapping case study.
pub fn sn10() -> ChipSpec {
    chip("SN10", 307.2, 640, 320.0 * MEGA, 1536.0 * GIGA, 200.0 * GIGA, (32, 16), 500.0, 15_000.0)
}

pub fn chip_preset(name: &str) -> Result<ChipSpec> {
    let lower = name.to_ascii_lowercase();
    builtin_chips()
        .into_iter()
        .chain(std::iter::once(sn10()))
        .find(|c| c.name.to_ascii_lowercase() == lower)
        .ok_or_else(|| Error::MissingCatalogEntry(format!("chip/{name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_system(sizes: &[usize]) -> String {
        let dims: Vec<String> = sizes
            .iter()
            .map(|s| format!(r#"{{"topology": "ring", "size": {s}, "link_bw": 25e9}}"#))
            .collect();
        format!(r#"{{"chip": "SN10", "dims": [{}], "assign": {{"tp": 0}}}}"#, dims.join(","))
    }

    #[test]
    fn single_ring_tp() {
        let (sys, _) = parse_system(&ring_system(&[8])).unwrap();
        assert_eq!((sys.n_tp, sys.n_pp, sys.n_dp), (8, 1, 1));
        assert_eq!(sys.dims[0].hop_latency, 0.0);
    }

    #[test]
    fn declared_size_mismatch() {
        let text = r#"{"chip": "SN10",
            "dims": [{"topology": "ring", "size": 4, "link_bw": 1e9}, {"topology": "ring", "size": 2, "link_bw": 1e9}],
            "assign": {"tp": 0, "pp": 1}, "n_tp": 8}"#;
        let err = parse_system(text).unwrap_err();
        assert!(err.to_string().contains("dim-size mismatch"), "{err}");
    }

    #[test]
    fn unassigned_dim_rejected() {
        let err = parse_system(&ring_system(&[8, 2])).unwrap_err();
        assert!(err.to_string().contains("dim-size mismatch"), "{err}");
    }

    #[test]
    fn shared_dim_rejected() {
        let text = r#"{"chip": "SN10", "dims": [{"topology": "ring", "size": 4, "link_bw": 1e9}],
            "assign": {"tp": 0, "dp": 0}}"#;
        assert!(parse_system(text).is_err());
    }

    #[test]
    fn sn10_preset_matches_case_study() {
        let c = sn10();
        assert!((c.peak_flops() - 307.2e12).abs() < 1.0);
        assert_eq!(c.s_cap, 320e6);
        assert_eq!(c.d_bw, 200e9);
        let text = r#"{"chip": "SN10", "dims": [{"topology": "ring", "size": 8}], "assign": {"tp": 0},
            "tech": {"memory": "ddr4", "interconnect": "pcie4"}}"#;
        let (sys, _) = parse_system(text).unwrap();
        assert_eq!(sys.dims[0].link_bw, 25e9);
    }

    #[test]
    fn power_curve() {
        assert!((chip_power(0.0) - 0.04).abs() < 1e-15);
        assert!((chip_power(7500.0) - 13.69).abs() < 1e-9);
        let raw = 3e-7 * 993.0f64.powi(2) - 4.3e-4 * 993.0 + 0.04;
        assert!((raw + 0.091).abs() < 1e-3);
        assert_eq!(chip_power(993.0), POWER_FLOOR_KW);
    }

    #[test]
    fn builtin_chip_table() {
        let chips = builtin_chips();
        assert_eq!(chips.len(), 4);
        let h100 = &chips[0];
        assert!((h100.peak_flops() / TERA - 993.0).abs() < 1e-9);
        assert_eq!(h100.s_cap, 113e6);
        assert_eq!(chips[3].s_cap, 40e9);
    }

    #[test]
    fn link_counting() {
        assert_eq!(Topology::Ring.links(4), 4);
        assert_eq!(Topology::FullyConnected.links(4), 6);
        assert_eq!(Topology::Switch.links(4), 4);
        assert_eq!(Topology::Ring.links(1), 0);
    }

    #[test]
    fn one_chip_price() {
        let mut c = sn10();
        c.price_usd = Some(100.0);
        let sys = SystemSpec::single_chip(c);
        let cp = system_cost_power(&sys, &TechCatalog::default()).unwrap();
        assert_eq!(cp.price_usd, 100.0);
    }

    #[test]
    fn ring_of_four_counts_four_links() {
        let mut c = sn10();
        c.price_usd = Some(0.0001);
        let mut sys = SystemSpec::new(c, vec![NetworkDim::new(Topology::Ring, 4, 1e9)], vec![0], vec![], vec![]).unwrap();
        sys.tech = Some(TechChoice { memory: "ddr4".into(), interconnect: "pcie4".into() });
        assert_eq!(sys.total_links(), 4);
        let mut catalog = TechCatalog::default();
        catalog.memory.get_mut("ddr4").unwrap().price_per_gb = 0.0;
        let cp = system_cost_power(&sys, &catalog).unwrap();
        assert!((cp.price_usd - (4.0 * 0.0001 + 4.0 * 50.0)).abs() < 1e-9);
    }

    #[test]
    fn missing_tech_entry() {
        let mut sys = SystemSpec::single_chip(sn10());
        sys.tech = Some(TechChoice { memory: "hbm9".into(), interconnect: "pcie4".into() });
        assert!(matches!(system_cost_power(&sys, &TechCatalog::default()), Err(Error::MissingCatalogEntry(_))));
    }
}
