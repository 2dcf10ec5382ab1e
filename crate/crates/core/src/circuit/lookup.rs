//! Precomputed (α, β₁, β₂) ↦ (Δ, I_p) table.
//!
//! Values are stored for a unit-area E_J of 1 GHz and scaled on query, so a
//! table does not depend on the calibrated energy scale. Interpolation is
//! tensor-product cubic Lagrange on ln Δ and ln I_p (Δ is close to
//! exponential in the junction areas).
//!
//! Where α approaches the smaller of β₁, β₂ the even and odd ground states
//! cross at half flux and Δ dips through zero, so ln Δ is singular there.
//! The table keeps the signed gap E_odd − E_even, which is smooth through the
//! crossing. Each cell gets one of three modes from leave-one-out cubic
//! checks at its stencil nodes:
//!
//! - log: ln Δ and ln I_p are smooth and the gap keeps its sign;
//! - signed: the signed gap is interpolated, and a query falls back to a
//!   direct solve when the cell's error estimate is not small against |Δ|;
//! - direct: every query is solved directly.
//!
//! # Cache format (version 1)
//!
//! Little-endian throughout:
//!
//! ```text
//! b"FXLT"           magic
//! u32               format version
//! [u8; 32]          SHA-256 key of the table parameters
//! f64               E_J/E_c
//! u64               charge cutoff
//! 3 × (f64, f64, u64)  axis lo, hi, node count for α, β₁, β₂
//! f64               worst validated relative error (NaN if never validated)
//! u64               node count n
//! n × (f64, f64)    signed gap/E_J and I_p/E_J (nA per GHz), α-major
//! ```
//!
//! A file whose key does not match the requested parameters is rejected.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{signed_two_level_params, two_level_params, JunctionGeometry, SolverGrid, TwoLevelParams};
use crate::{par, Error, Result};

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FXLT";
const PROBE_SEED: u64 = 0x1007_cafe;

/// Maximum relative interpolation error accepted at probe points.
pub const MAX_PROBE_ERROR: f64 = 5e-3;

/// Leave-one-out cubic prediction error (in ln units) above which log
/// interpolation is abandoned near a node.
pub const ROUGHNESS_THRESHOLD: f64 = 0.02;

/// In signed cells, the largest ratio of the cell's error estimate to the
/// interpolated |Δ| that is answered without a direct solve.
pub const SIGNED_ERROR_RATIO: f64 = 1e-3;

/// Bound on [`LookupTable::max_relative_alpha_step`] for a continuous gap
/// surface at the default node spacing.
pub const ALPHA_STEP_BOUND: f64 = 0.5;

/// Uniform axis of `nodes` points on [lo, hi]; a single node requires lo == hi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Self {
        Self { lo, hi, nodes }
    }

    pub fn point(x: f64) -> Self {
        Self {
            lo: x,
            hi: x,
            nodes: 1,
        }
    }

    /// Axis over `center ± half_width` with node spacing at most `spacing`.
    pub fn around(center: f64, half_width: f64, spacing: f64) -> Self {
        if half_width <= 0.0 {
            return Self::point(center);
        }
        let nodes = ((2.0 * half_width / spacing).ceil() as usize + 1).max(4);
        Self::new(center - half_width, center + half_width, nodes)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.nodes >= 1
            && self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo > 0.0
            && if self.nodes == 1 {
                self.lo == self.hi
            } else {
                self.hi > self.lo
            };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("lookup axis", format!("{name}: {self:?}")))
        }
    }

    fn step(&self) -> f64 {
        if self.nodes > 1 {
            (self.hi - self.lo) / (self.nodes - 1) as f64
        } else {
            0.0
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.lo.abs().max(self.hi.abs());
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// First node of the interpolation stencil and the Lagrange weights.
    fn stencil(&self, x: f64) -> (usize, [f64; 4], usize) {
        let n = self.nodes;
        let len = n.min(4);
        if n == 1 {
            return (0, [1.0, 0.0, 0.0, 0.0], 1);
        }
        let t = ((x - self.lo) / self.step()).clamp(0.0, (n - 1) as f64);
        let start = (t.floor() as isize - 1).clamp(0, (n - len) as isize) as usize;
        let mut w = [0.0; 4];
        for (i, wi) in w.iter_mut().enumerate().take(len) {
            let xi = self.node(start + i);
            let mut p = 1.0;
            for j in 0..len {
                if j != i {
                    let xj = self.node(start + j);
                    p *= (x - xj) / (xi - xj);
                }
            }
            *wi = p;
        }
        (start, w, len)
    }
}

/// Parameters that fully determine a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupSpec {
    pub alpha: AxisRange,
    pub beta1: AxisRange,
    pub beta2: AxisRange,
    pub ej_over_ec: f64,
    pub grid: SolverGrid,
}

impl LookupSpec {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate("alpha")?;
        self.beta1.validate("beta1")?;
        self.beta2.validate("beta2")?;
        self.grid.validate()?;
        if !(self.ej_over_ec.is_finite() && self.ej_over_ec > 0.0) {
            return Err(Error::validation("lookup spec", "ej_over_ec must be positive"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.alpha.nodes * self.beta1.nodes * self.beta2.nodes
    }

    fn unit_geometry(&self, alpha: f64, beta1: f64, beta2: f64) -> JunctionGeometry {
        JunctionGeometry {
            alpha,
            beta1,
            beta2,
            ej_over_ec: self.ej_over_ec,
            ej_ghz: 1.0,
        }
    }

    pub fn cache_key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"fluxens-lookup");
        h.update(CACHE_VERSION.to_le_bytes());
        h.update(super::TWO_LEVEL_FLUX_OFFSET.to_le_bytes());
        h.update(self.ej_over_ec.to_le_bytes());
        h.update((self.grid.charge_cutoff as u64).to_le_bytes());
        for axis in [self.alpha, self.beta1, self.beta2] {
            h.update(axis.lo.to_le_bytes());
            h.update(axis.hi.to_le_bytes());
            h.update((axis.nodes as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn cache_file_name(&self) -> String {
        let key = self.cache_key();
        let hex: String = key[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("lookup-{hex}.bin")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CellMode {
    Log,
    /// Carries the largest leave-one-out error of the signed gap.
    Signed(f64),
    Direct,
}

#[derive(Debug, Clone)]
pub struct LookupTable {
    spec: LookupSpec,
    /// Unit-E_J signed gap per node, α-major.
    signed: Vec<f64>,
    current: Vec<f64>,
    ln_delta: Vec<f64>,
    ln_current: Vec<f64>,
    /// Per cell, α-major.
    modes: Vec<CellMode>,
    ej_ghz: f64,
    validated_error: Option<f64>,
}

impl LookupTable {
    /// Solves the circuit at every node (in parallel when enabled).
    pub fn build(spec: LookupSpec) -> Result<Self> {
        spec.validate()?;
        let (na, nb1, nb2) = (spec.alpha.nodes, spec.beta1.nodes, spec.beta2.nodes);
        let values = par::try_map_indexed(na * nb1 * nb2, |idx| {
            let ia = idx / (nb1 * nb2);
            let ib1 = (idx / nb2) % nb1;
            let ib2 = idx % nb2;
            let g = spec.unit_geometry(spec.alpha.node(ia), spec.beta1.node(ib1), spec.beta2.node(ib2));
            signed_two_level_params(&g, spec.grid)
        })?;
        Self::from_values(spec, values, None)
    }

    fn from_values(spec: LookupSpec, values: Vec<(f64, f64)>, validated_error: Option<f64>) -> Result<Self> {
        if values.iter().any(|&(s, i)| !(s != 0.0 && s.is_finite() && i > 0.0 && i.is_finite())) {
            return Err(Error::validation(
                "lookup table",
                "zero gap or non-positive current at a node",
            ));
        }
        let mut table = Self {
            spec,
            signed: values.iter().map(|v| v.0).collect(),
            current: values.iter().map(|v| v.1).collect(),
            ln_delta: values.iter().map(|v| v.0.abs().ln()).collect(),
            ln_current: values.iter().map(|v| v.1.ln()).collect(),
            modes: Vec::new(),
            ej_ghz: 1.0,
            validated_error,
        };
        table.modes = table.classify_cells();
        Ok(table)
    }

    fn cell_dims(&self) -> [usize; 3] {
        let s = &self.spec;
        [s.alpha.nodes, s.beta1.nodes, s.beta2.nodes].map(|n| n.saturating_sub(1).max(1))
    }

    fn cell_index(&self, ca: usize, c1: usize, c2: usize) -> usize {
        let [_, d1, d2] = self.cell_dims();
        (ca * d1 + c1) * d2 + c2
    }

    /// Leave-one-out cubic prediction error of `series` at node `idx` along
    /// `axis`, or None when the axis is too short to leave a node out.
    fn leave_one_out(&self, series: &[f64], idx: [usize; 3], axis: usize) -> Option<f64> {
        let s = &self.spec;
        let range = [s.alpha, s.beta1, s.beta2][axis];
        if range.nodes < 5 {
            return None;
        }
        let i = idx[axis];
        let others = leave_one_out_stencil(i, range.nodes);
        let x = range.node(i);
        let mut pred = 0.0;
        for (a, &ja) in others.iter().enumerate() {
            let mut w = 1.0;
            for (b, &jb) in others.iter().enumerate() {
                if a != b {
                    w *= (x - range.node(jb)) / (range.node(ja) - range.node(jb));
                }
            }
            let mut k = idx;
            k[axis] = ja;
            pred += w * series[self.index(k[0], k[1], k[2])];
        }
        Some((pred - series[self.index(idx[0], idx[1], idx[2])]).abs())
    }

    fn classify_cells(&self) -> Vec<CellMode> {
        struct NodeCheck {
            log_rough: bool,
            current_rough: bool,
            /// None when some varying axis is too short to check.
            signed_error: Option<f64>,
        }
        let s = &self.spec;
        let n = [s.alpha.nodes, s.beta1.nodes, s.beta2.nodes];
        let checks: Vec<NodeCheck> = (0..self.signed.len())
            .map(|flat| {
                let idx = [flat / (n[1] * n[2]), (flat / n[2]) % n[1], flat % n[2]];
                let mut c = NodeCheck {
                    log_rough: false,
                    current_rough: false,
                    signed_error: Some(0.0),
                };
                for axis in (0..3).filter(|&a| n[a] > 1) {
                    match (
                        self.leave_one_out(&self.ln_delta, idx, axis),
                        self.leave_one_out(&self.ln_current, idx, axis),
                        self.leave_one_out(&self.signed, idx, axis),
                    ) {
                        (Some(ld), Some(lc), Some(sg)) => {
                            c.log_rough |= ld > ROUGHNESS_THRESHOLD;
                            c.current_rough |= lc > ROUGHNESS_THRESHOLD;
                            c.signed_error = c.signed_error.map(|e| e.max(sg));
                        }
                        _ => c.signed_error = None,
                    }
                }
                c
            })
            .collect();

        let dims = self.cell_dims();
        let stencil_nodes = |cell: usize, nodes: usize| {
            let len = nodes.min(4);
            let start = cell.saturating_sub(1).min(nodes - len);
            start..start + len
        };
        let mut modes = Vec::with_capacity(dims.iter().product());
        for ca in 0..dims[0] {
            for c1 in 0..dims[1] {
                for c2 in 0..dims[2] {
                    let mut log_ok = true;
                    let mut current_ok = true;
                    let mut signed_error = Some(0.0f64);
                    let mut sign = None;
                    for ia in stencil_nodes(ca, n[0]) {
                        for i1 in stencil_nodes(c1, n[1]) {
                            for i2 in stencil_nodes(c2, n[2]) {
                                let k = self.index(ia, i1, i2);
                                let c = &checks[k];
                                log_ok &= !c.log_rough;
                                current_ok &= !c.current_rough;
                                signed_error = match (signed_error, c.signed_error) {
                                    (Some(a), Some(b)) => Some(a.max(b)),
                                    _ => None,
                                };
                                let positive = self.signed[k] > 0.0;
                                log_ok &= *sign.get_or_insert(positive) == positive;
                            }
                        }
                    }
                    modes.push(match (current_ok, log_ok, signed_error) {
                        (false, _, _) => CellMode::Direct,
                        (true, true, _) => CellMode::Log,
                        (true, false, Some(e)) => CellMode::Signed(e),
                        (true, false, None) => CellMode::Direct,
                    });
                }
            }
        }
        modes
    }

    /// Fractions of cells in (signed, direct) mode.
    pub fn cell_mode_fractions(&self) -> (f64, f64) {
        let n = self.modes.len() as f64;
        let signed = self.modes.iter().filter(|m| matches!(m, CellMode::Signed(_))).count();
        let direct = self.modes.iter().filter(|m| matches!(m, CellMode::Direct)).count();
        (signed as f64 / n, direct as f64 / n)
    }

    fn cell_of(axis: &AxisRange, x: f64) -> usize {
        if axis.nodes < 2 {
            return 0;
        }
        let t = ((x - axis.lo) / axis.step()).floor();
        (t.max(0.0) as usize).min(axis.nodes - 2)
    }

    pub fn spec(&self) -> &LookupSpec {
        &self.spec
    }

    pub fn ej_ghz(&self) -> f64 {
        self.ej_ghz
    }

    /// Sets the unit-area E_J used to scale query results.
    pub fn with_ej(mut self, ej_ghz: f64) -> Self {
        self.ej_ghz = ej_ghz;
        self
    }

    pub fn validated_error(&self) -> Option<f64> {
        self.validated_error
    }

    /// Stored (scaled) node value.
    pub fn node_value(&self, ia: usize, ib1: usize, ib2: usize) -> TwoLevelParams {
        let k = self.index(ia, ib1, ib2);
        TwoLevelParams {
            delta_ghz: self.signed[k].abs() * self.ej_ghz,
            current_na: self.current[k] * self.ej_ghz,
        }
    }

    fn index(&self, ia: usize, ib1: usize, ib2: usize) -> usize {
        (ia * self.spec.beta1.nodes + ib1) * self.spec.beta2.nodes + ib2
    }

    pub fn contains(&self, alpha: f64, beta1: f64, beta2: f64) -> bool {
        self.spec.alpha.contains(alpha)
            && self.spec.beta1.contains(beta1)
            && self.spec.beta2.contains(beta2)
    }

    /// Interpolated value, falling back to a direct solve where the table
    /// cannot meet its accuracy target.
    pub fn query(&self, alpha: f64, beta1: f64, beta2: f64) -> Result<TwoLevelParams> {
        if let Some(v) = self.interpolate(alpha, beta1, beta2)? {
            return Ok(v);
        }
        let d = two_level_params(&self.spec.unit_geometry(alpha, beta1, beta2), self.spec.grid)?;
        Ok(TwoLevelParams {
            delta_ghz: d.delta_ghz * self.ej_ghz,
            current_na: d.current_na * self.ej_ghz,
        })
    }

    /// Interpolated value, or None where a direct solve is needed.
    pub fn interpolate(&self, alpha: f64, beta1: f64, beta2: f64) -> Result<Option<TwoLevelParams>> {
        if !self.contains(alpha, beta1, beta2) {
            return Err(Error::OutOfRange { alpha, beta1, beta2 });
        }
        let s = &self.spec;
        let cell = self.cell_index(
            Self::cell_of(&s.alpha, alpha),
            Self::cell_of(&s.beta1, beta1),
            Self::cell_of(&s.beta2, beta2),
        );
        let mode = self.modes[cell];
        if mode == CellMode::Direct {
            return Ok(None);
        }
        let (sa, wa, la) = s.alpha.stencil(alpha);
        let (s1, w1, l1) = s.beta1.stencil(beta1);
        let (s2, w2, l2) = s.beta2.stencil(beta2);
        let (mut ld, mut lc, mut sg) = (0.0, 0.0, 0.0);
        for (i, a) in wa[..la].iter().enumerate() {
            for (j, b) in w1[..l1].iter().enumerate() {
                for (k, c) in w2[..l2].iter().enumerate() {
                    let w = a * b * c;
                    if w != 0.0 {
                        let idx = self.index(sa + i, s1 + j, s2 + k);
                        ld += w * self.ln_delta[idx];
                        lc += w * self.ln_current[idx];
                        sg += w * self.signed[idx];
                    }
                }
            }
        }
        let delta = match mode {
            CellMode::Log => ld.exp(),
            CellMode::Signed(err) if err <= SIGNED_ERROR_RATIO * sg.abs() => sg.abs(),
            _ => return Ok(None),
        };
        Ok(Some(TwoLevelParams {
            delta_ghz: delta * self.ej_ghz,
            current_na: lc.exp() * self.ej_ghz,
        }))
    }

    /// Compares interpolated values with direct solves at `probes` uniform
    /// random points and returns the worst relative error over Δ and I_p.
    pub fn probe_error(&self, probes: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let mut draw = |a: &AxisRange| a.lo + (a.hi - a.lo) * rng.random::<f64>();
        let points: Vec<(f64, f64, f64)> = (0..probes)
            .map(|_| (draw(&self.spec.alpha), draw(&self.spec.beta1), draw(&self.spec.beta2)))
            .collect();
        let errors = par::try_map_indexed(points.len(), |i| {
            let (a, b1, b2) = points[i];
            let direct = two_level_params(&self.spec.unit_geometry(a, b1, b2), self.spec.grid)?;
            let interp = self.query(a, b1, b2)?;
            let ed = (interp.delta_ghz / self.ej_ghz / direct.delta_ghz - 1.0).abs();
            let ec = (interp.current_na / self.ej_ghz / direct.current_na - 1.0).abs();
            Ok::<f64, Error>(ed.max(ec))
        })?;
        Ok(errors.into_iter().fold(0.0, f64::max))
    }

    /// Runs [`probe_error`](Self::probe_error) and rejects the table when the
    /// worst error exceeds [`MAX_PROBE_ERROR`].
    pub fn validate(mut self, probes: usize) -> Result<Self> {
        let worst = self.probe_error(probes)?;
        if worst > MAX_PROBE_ERROR {
            return Err(Error::LookupRejected {
                worst,
                limit: MAX_PROBE_ERROR,
            });
        }
        self.validated_error = Some(worst);
        Ok(self)
    }

    /// Largest |Δᵢ₊₁ − Δᵢ| / max(Δᵢ, Δᵢ₊₁) between neighbouring α nodes. A
    /// level-ordering jump would show up as a step near 1.
    pub fn max_relative_alpha_step(&self) -> f64 {
        let s = &self.spec;
        let mut worst: f64 = 0.0;
        for ia in 1..s.alpha.nodes {
            for ib1 in 0..s.beta1.nodes {
                for ib2 in 0..s.beta2.nodes {
                    let x = self.signed[self.index(ia - 1, ib1, ib2)].abs();
                    let y = self.signed[self.index(ia, ib1, ib2)].abs();
                    worst = worst.max((y - x).abs() / x.max(y));
                }
            }
        }
        worst
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::with_capacity(128 + 16 * self.signed.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&s.cache_key());
        out.extend_from_slice(&s.ej_over_ec.to_le_bytes());
        out.extend_from_slice(&(s.grid.charge_cutoff as u64).to_le_bytes());
        for axis in [s.alpha, s.beta1, s.beta2] {
            out.extend_from_slice(&axis.lo.to_le_bytes());
            out.extend_from_slice(&axis.hi.to_le_bytes());
            out.extend_from_slice(&(axis.nodes as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.validated_error.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&(self.signed.len() as u64).to_le_bytes());
        for (g, i) in self.signed.iter().zip(&self.current) {
            out.extend_from_slice(&g.to_le_bytes());
            out.extend_from_slice(&i.to_le_bytes());
        }
        out
    }

    /// Decodes a cache image, rejecting it unless it was built for `spec`.
    pub fn from_bytes(bytes: &[u8], spec: &LookupSpec) -> std::result::Result<Self, String> {
        let mut r = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if r.len() < n {
                return Err("truncated file".into());
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());

        if take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        if take(32)? != spec.cache_key() {
            return Err("parameter hash mismatch".into());
        }
        let ratio = f64_at(take(8)?);
        let cutoff = u64_at(take(8)?) as usize;
        let mut axes = [AxisRange::point(1.0); 3];
        for axis in &mut axes {
            let lo = f64_at(take(8)?);
            let hi = f64_at(take(8)?);
            let nodes = u64_at(take(8)?) as usize;
            *axis = AxisRange::new(lo, hi, nodes);
        }
        let stored = LookupSpec {
            alpha: axes[0],
            beta1: axes[1],
            beta2: axes[2],
            ej_over_ec: ratio,
            grid: SolverGrid {
                charge_cutoff: cutoff,
            },
        };
        if &stored != spec {
            return Err("header does not match requested parameters".into());
        }
        let validated = f64_at(take(8)?);
        let n = u64_at(take(8)?) as usize;
        if n != spec.node_count() {
            return Err(format!("expected {} nodes, found {n}", spec.node_count()));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let gap = f64_at(take(8)?);
            let current = f64_at(take(8)?);
            values.push((gap, current));
        }
        if !r.is_empty() {
            return Err("trailing bytes".into());
        }
        Self::from_values(*spec, values, (!validated.is_nan()).then_some(validated))
            .map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, spec: &LookupSpec) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, spec).map_err(|reason| Error::Cache {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Loads a validated table from `cache_dir` or builds, validates and
    /// stores one. An unreadable or mismatched cache file is rebuilt.
    pub fn load_or_build(spec: LookupSpec, cache_dir: Option<&Path>, probes: usize) -> Result<Self> {
        let path: Option<PathBuf> = cache_dir.map(|d| d.join(spec.cache_file_name()));
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            match Self::load(p, &spec) {
                Ok(t) if t.validated_error.is_some() || probes == 0 => return Ok(t),
                Ok(_) => log::info!("{}: cached table was never validated", p.display()),
                Err(e) => log::warn!("ignoring lookup cache: {e}"),
            }
        }
        log::info!("building lookup table with {} nodes", spec.node_count());
        let mut table = Self::build(spec)?;
        if probes > 0 {
            table = table.validate(probes)?;
        }
        if let Some(p) = path {
            table.save(&p)?;
        }
        Ok(table)
    }
}

/// Four nodes nearest to `i` on an axis of `n >= 5` nodes, excluding `i`.
fn leave_one_out_stencil(i: usize, n: usize) -> [usize; 4] {
    let mut picked = [0usize; 4];
    let mut k = 0;
    let mut lo = i as isize - 1;
    let mut hi = i + 1;
    while k < 4 {
        let take_lo = lo >= 0 && (hi >= n || (i - lo as usize) <= (hi - i));
        if take_lo {
            picked[k] = lo as usize;
            lo -= 1;
        } else {
            picked[k] = hi;
            hi += 1;
        }
        k += 1;
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> LookupSpec {
        LookupSpec {
            alpha: AxisRange::new(0.60, 0.66, 4),
            beta1: AxisRange::new(0.96, 1.04, 3),
            beta2: AxisRange::new(0.96, 1.04, 3),
            ej_over_ec: 75.0,
            grid: SolverGrid { charge_cutoff: 7 },
        }
    }

    #[test]
    fn stencil_weights_partition_unity() {
        let axis = AxisRange::new(0.5, 0.8, 7);
        for x in [0.5, 0.53, 0.61, 0.77, 0.8] {
            let (_, w, len) = axis.stencil(x);
            let s: f64 = w[..len].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_stencil_reproduces_cubics() {
        let axis = AxisRange::new(0.2, 1.4, 9);
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        for x in [0.21, 0.5, 0.93, 1.39] {
            let (s, w, len) = axis.stencil(x);
            let v: f64 = (0..len).map(|i| w[i] * f(axis.node(s + i))).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn leave_one_out_picks_nearest() {
        let mut s = leave_one_out_stencil(0, 6);
        s.sort();
        assert_eq!(s, [1, 2, 3, 4]);
        let mut s = leave_one_out_stencil(3, 7);
        s.sort();
        assert_eq!(s, [1, 2, 4, 5]);
        let mut s = leave_one_out_stencil(6, 7);
        s.sort();
        assert_eq!(s, [2, 3, 4, 5]);
    }

    #[test]
    fn node_identity_and_range() {
        let table = LookupTable::build(small_spec()).unwrap().with_ej(300.0);
        let s = *table.spec();
        for (ia, ib1, ib2) in [(0, 0, 0), (2, 1, 2), (3, 2, 1)] {
            let v = table
                .query(s.alpha.node(ia), s.beta1.node(ib1), s.beta2.node(ib2))
                .unwrap();
            let stored = table.node_value(ia, ib1, ib2);
            assert!((v.delta_ghz / stored.delta_ghz - 1.0).abs() < 1e-12);
            assert!((v.current_na / stored.current_na - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            table.query(0.7, 1.0, 1.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(table.query(0.63, 1.0, 0.9).is_err());
    }

    #[test]
    fn cache_round_trip_and_key_mismatch() {
        let spec = small_spec();
        let table = LookupTable::build(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(spec.cache_file_name());
        table.save(&path).unwrap();
        let loaded = LookupTable::load(&path, &spec).unwrap();
        assert_eq!(loaded.to_bytes(), table.to_bytes());

        let mut other = spec;
        other.grid.charge_cutoff = 8;
        assert!(matches!(
            LookupTable::load(&path, &other),
            Err(Error::Cache { .. })
        ));

        let mut corrupt = table.to_bytes();
        corrupt[10] ^= 0xff;
        assert!(LookupTable::from_bytes(&corrupt, &spec).is_err());
    }

    #[test]
    fn degenerate_axes_give_single_node() {
        let spec = LookupSpec {
            alpha: AxisRange::point(0.6285),
            beta1: AxisRange::point(1.0),
            beta2: AxisRange::point(1.0),
            ej_over_ec: 75.0,
            grid: SolverGrid { charge_cutoff: 7 },
        };
        let table = LookupTable::build(spec).unwrap();
        assert_eq!(table.spec().node_count(), 1);
        let v = table.query(0.6285, 1.0, 1.0).unwrap();
        let direct = two_level_params(&spec.unit_geometry(0.6285, 1.0, 1.0), spec.grid).unwrap();
        assert!((v.delta_ghz / direct.delta_ghz - 1.0).abs() < 1e-12);
    }
}
