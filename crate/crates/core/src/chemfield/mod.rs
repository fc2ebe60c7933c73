//! Steady plume of the source chemical in the vessel.
//!
//! Solves `∇·(−D∇C + vC) = 0` on the axisymmetric `(r, x)` plane with a
//! vertex-centred finite-volume scheme: first-order upwind advection along
//! the axis, central diffusion in both directions with the cylindrical face
//! areas, and the wall flux `F_source` injected on `0 ≤ x ≤ L_source`. Only the
//! source contribution is solved; the uniform background is superposed by
//! the queries that ask for it.
//!
//! Boundary conditions: symmetry on the axis, no flux through the wall outside
//! the source, `C = 0` on the inflow column `x = x_min`, and no axial
//! diffusive flux through the outflow column `x = x_max`.

mod banded;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use banded::BandMatrix;

use crate::error::{Error, Result};
use crate::hydro::{annulus_mean_velocity, Position};
use crate::params::{ScenarioParams, Violation};

const MAX_REFINEMENTS: usize = 20;

/// Discretisation of the `(r, x)` plane. Axial coordinates are measured from
/// the leading (upstream) edge of the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Radial node spacing, μm.
    pub dr: f64,
    /// Axial node spacing, μm.
    pub dx: f64,
    /// Inflow column, μm.
    pub x_min: f64,
    /// Outflow column, μm.
    pub x_max: f64,
    /// Target relative residual of the linear solve.
    pub tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dr: 0.25,
            dx: 1.0,
            x_min: -50.0,
            x_max: 450.0,
            tolerance: 1e-8,
        }
    }
}

fn whole_steps(span: f64, step: f64) -> Option<usize> {
    let n = span / step;
    let rounded = n.round();
    ((n - rounded).abs() <= 1e-9 * rounded.max(1.0) && rounded >= 1.0).then_some(rounded as usize)
}

impl GridSpec {
    /// Same extent and tolerance with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            dr: self.dr / 2.0,
            dx: self.dx / 2.0,
            ..self.clone()
        }
    }

    pub fn validate(&self, p: &ScenarioParams) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.dr > 0.0) {
            out.push(Violation::new("grid_dr", "grid_dr > 0"));
        } else {
            if self.dr > p.vessel_radius / 10.0 {
                out.push(Violation::new("grid_dr", "grid too coarse: grid_dr ≤ R/10"));
            }
            if whole_steps(p.vessel_radius, self.dr).is_none() {
                out.push(Violation::new("grid_dr", "grid_dr divides R"));
            }
        }
        if !(self.dx > 0.0) {
            out.push(Violation::new("grid_dx", "grid_dx > 0"));
        } else if whole_steps(self.x_max - self.x_min, self.dx).is_none() {
            out.push(Violation::new("grid_dx", "grid_dx divides x_max - x_min"));
        }
        if !(self.x_min < 0.0 && p.source_length < self.x_max) {
            out.push(Violation::new("grid_x_min", "x_min < 0 < L_source < x_max"));
        }
        if !(self.tolerance > 0.0) {
            out.push(Violation::new("tolerance", "tolerance > 0"));
        }
        out
    }
}

/// Source-chemical concentration (molecule/μm³) at the nodes
/// `r_i = i·dr`, `x_j = x_min + j·dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    radius: f64,
    n_r: usize,
    n_x: usize,
    /// `values[i * n_x + j]`.
    values: Vec<f64>,
    /// Relative residual reached by the solve.
    pub residual: f64,
}

impl ScalarField {
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn r_at(&self, i: usize) -> f64 {
        if i + 1 == self.n_r {
            self.radius
        } else {
            i as f64 * self.grid.dr
        }
    }

    pub fn x_at(&self, j: usize) -> f64 {
        if j + 1 == self.n_x {
            self.grid.x_max
        } else {
            self.grid.x_min + j as f64 * self.grid.dx
        }
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_x + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest wall value over the source segment.
    pub fn peak_wall_concentration(&self, p: &ScenarioParams) -> f64 {
        let wall = self.n_r - 1;
        (0..self.n_x)
            .filter(|&j| {
                let x = self.x_at(j);
                x >= -1e-9 && x <= p.source_length + 1e-9
            })
            .map(|j| self.value(wall, j))
            .fold(0.0, f64::max)
    }

    /// Axial node index of the maximum along radial node `i`.
    pub fn argmax_x(&self, i: usize) -> usize {
        let row = &self.values[i * self.n_x..(i + 1) * self.n_x];
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    }

    /// Builds a field from explicit node values laid out as `values[i * n_x + j]`.
    pub fn from_values(grid: GridSpec, p: &ScenarioParams, values: Vec<f64>) -> Result<Self> {
        let (n_r, n_x) = node_counts(&grid, p)?;
        if values.len() != n_r * n_x {
            return Err(Error::Grid(format!(
                "expected {} node values, got {}",
                n_r * n_x,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            radius: p.vessel_radius,
            n_r,
            n_x,
            values,
            residual: 0.0,
        })
    }

    /// Uniform source concentration everywhere, inflow column included.
    pub fn uniform(grid: GridSpec, p: &ScenarioParams, value: f64) -> Result<Self> {
        let (n_r, n_x) = node_counts(&grid, p)?;
        Self::from_values(grid, p, vec![value; n_r * n_x])
    }

    /// Lookup helper for repeated queries along one streamline.
    pub(crate) fn streamline(&self, r: f64) -> Streamline<'_> {
        let s = (r / self.grid.dr).clamp(0.0, (self.n_r - 1) as f64);
        let i0 = (s.floor() as usize).min(self.n_r - 2);
        Streamline {
            field: self,
            i0,
            wr: s - i0 as f64,
        }
    }

    /// Writes `r_um,x_um,conc_per_um3`, radial node outermost.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r_um,x_um,conc_per_um3")?;
        for i in 0..self.n_r {
            for j in 0..self.n_x {
                writeln!(w, "{},{},{:.9e}", self.r_at(i), self.x_at(j), self.value(i, j))?;
            }
        }
        Ok(())
    }
}

/// Bilinear lookups at fixed radius.
pub(crate) struct Streamline<'a> {
    field: &'a ScalarField,
    i0: usize,
    wr: f64,
}

impl Streamline<'_> {
    /// Source concentration at axial position `x`. Upstream of the grid the
    /// value is zero (inflow); downstream it stays at the outflow column,
    /// consistent with the zero-gradient exit.
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        let f = self.field;
        let g = &f.grid;
        if x <= g.x_min {
            return 0.0;
        }
        let s = ((x - g.x_min) / g.dx).min((f.n_x - 1) as f64);
        let j0 = (s as usize).min(f.n_x - 2);
        let wx = s - j0 as f64;
        let n = f.n_x;
        let row0 = self.i0 * n;
        let row1 = row0 + n;
        let v = &f.values;
        let lo = v[row0 + j0] + wx * (v[row0 + j0 + 1] - v[row0 + j0]);
        let hi = v[row1 + j0] + wx * (v[row1 + j0 + 1] - v[row1 + j0]);
        lo + self.wr * (hi - lo)
    }
}

fn node_counts(grid: &GridSpec, p: &ScenarioParams) -> Result<(usize, usize)> {
    let violations = grid.validate(p);
    if !violations.is_empty() {
        return Err(Error::Grid(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    let nr = whole_steps(p.vessel_radius, grid.dr).expect("validated");
    let nx = whole_steps(grid.x_max - grid.x_min, grid.dx).expect("validated");
    Ok((nr + 1, nx + 1))
}

/// Per-node control-volume geometry shared by the solver and the audit.
struct Geometry {
    n_r: usize,
    n_x: usize,
    /// Cross-section area of each radial control volume.
    area: Vec<f64>,
    /// Flux-averaged speed over each radial control volume.
    speed: Vec<f64>,
    /// Radial face positions: face `i` sits between nodes `i` and `i + 1`.
    face_r: Vec<f64>,
    dr: f64,
    dx: f64,
    x_min: f64,
    radius: f64,
}

impl Geometry {
    fn new(grid: &GridSpec, p: &ScenarioParams) -> Result<Self> {
        let (n_r, n_x) = node_counts(grid, p)?;
        let radius = p.vessel_radius;
        let dr = radius / (n_r - 1) as f64;
        let dx = (grid.x_max - grid.x_min) / (n_x - 1) as f64;
        let mut area = Vec::with_capacity(n_r);
        let mut speed = Vec::with_capacity(n_r);
        for i in 0..n_r {
            let lo = (i as f64 - 0.5).max(0.0) * dr;
            let hi = ((i as f64 + 0.5) * dr).min(radius);
            area.push(PI * (hi * hi - lo * lo));
            speed.push(annulus_mean_velocity(lo, hi, radius, p.avg_velocity));
        }
        let face_r = (0..n_r - 1).map(|i| (i as f64 + 0.5) * dr).collect();
        Ok(Self {
            n_r,
            n_x,
            area,
            speed,
            face_r,
            dr,
            dx,
            x_min: grid.x_min,
            radius,
        })
    }

    /// Axial extent of the control volume around column `j`.
    fn cell_span(&self, j: usize) -> (f64, f64) {
        let x = self.x_min + j as f64 * self.dx;
        let lo = x - 0.5 * self.dx;
        let hi = if j + 1 == self.n_x { x } else { x + 0.5 * self.dx };
        (lo, hi)
    }

    /// Molecules per second entering the wall node of column `j`.
    fn wall_source(&self, j: usize, p: &ScenarioParams) -> f64 {
        let (lo, hi) = self.cell_span(j);
        let overlap = (hi.min(p.source_length) - lo.max(0.0)).max(0.0);
        p.source_flux * 2.0 * PI * self.radius * overlap
    }
}

/// Solves for the steady source contribution.
pub fn solve_source_field(p: &ScenarioParams, grid: &GridSpec) -> Result<ScalarField> {
    let geo = Geometry::new(grid, p)?;
    let (n_r, n_x) = (geo.n_r, geo.n_x);
    let d = p.chem_diffusion;
    // unknowns: columns 1..n_x, ordered column-major so the band half-width is n_r
    let cols = n_x - 1;
    let n = cols * n_r;
    let idx = |i: usize, j: usize| (j - 1) * n_r + i;

    let mut a = BandMatrix::zeros(n, n_r);
    let mut b = vec![0.0; n];
    for j in 1..n_x {
        let (lo, hi) = geo.cell_span(j);
        let width = hi - lo;
        let outlet = j + 1 == n_x;
        for i in 0..n_r {
            let k = idx(i, j);
            let adv = geo.speed[i] * geo.area[i];
            let axial = d * geo.area[i] / geo.dx;
            // east face: advection out, diffusion unless at the outlet
            a.add(k, k, adv);
            if !outlet {
                a.add(k, k, axial);
                a.add(k, idx(i, j + 1), -axial);
            }
            // west face: upwind inflow and diffusion; column 0 is C = 0
            a.add(k, k, axial);
            if j > 1 {
                a.add(k, idx(i, j - 1), -adv - axial);
            }
            if i + 1 < n_r {
                let g = d * 2.0 * PI * geo.face_r[i] * width / geo.dr;
                a.add(k, k, g);
                a.add(k, idx(i + 1, j), -g);
            }
            if i > 0 {
                let g = d * 2.0 * PI * geo.face_r[i - 1] * width / geo.dr;
                a.add(k, k, g);
                a.add(k, idx(i - 1, j), -g);
            }
        }
        b[idx(n_r - 1, j)] = geo.wall_source(j, p);
    }

    let b_norm = norm(&b);
    let mut x = vec![0.0; n];
    let mut residual = 0.0;
    if b_norm > 0.0 {
        let original = a.clone();
        let lu = a.factor();
        x.copy_from_slice(&b);
        lu.solve_in_place(&mut x);
        let mut ax = vec![0.0; n];
        let mut iterations = 0;
        loop {
            original.mul_vec(&x, &mut ax);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            residual = norm(&r) / b_norm;
            if residual < grid.tolerance {
                break;
            }
            if iterations == MAX_REFINEMENTS || !residual.is_finite() {
                return Err(Error::NotConverged {
                    residual,
                    iterations,
                    tolerance: grid.tolerance,
                });
            }
            lu.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
            iterations += 1;
        }
    }

    let mut values = vec![0.0; n_r * n_x];
    for i in 0..n_r {
        for j in 1..n_x {
            // round-off can leave -1e-30 style values in far corners
            values[i * n_x + j] = x[idx(i, j)].max(0.0);
        }
    }
    Ok(ScalarField {
        grid: grid.clone(),
        radius: p.vessel_radius,
        n_r,
        n_x,
        values,
        residual,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Bilinear interpolation of the field at `pos`, optionally adding the
/// background concentration.
pub fn concentration_at(
    f: &ScalarField,
    pos: Position,
    include_background: bool,
    p: &ScenarioParams,
) -> Result<f64> {
    let g = &f.grid;
    let eps = 1e-9;
    let inside = pos.r >= -eps
        && pos.r <= f.radius + eps
        && pos.x >= g.x_min - eps
        && pos.x <= g.x_max + eps;
    if !inside {
        return Err(Error::OutOfDomain {
            r: pos.r,
            x: pos.x,
            domain: "field grid",
        });
    }
    let s = f.streamline(pos.r.clamp(0.0, f.radius));
    // the streamline helper treats x ≤ x_min as upstream of the inflow column,
    // which is zero anyway
    let c = s.at(pos.x.clamp(g.x_min, g.x_max));
    Ok(if include_background { c + p.c_background } else { c })
}

/// Net molecules per second leaving through the domain boundaries.
pub fn net_outflow(f: &ScalarField, p: &ScenarioParams) -> Result<f64> {
    let geo = Geometry::new(&f.grid, p)?;
    let last = f.n_x - 1;
    let mut out = 0.0;
    for i in 0..f.n_r {
        // advection through the outlet
        out += geo.speed[i] * geo.area[i] * f.value(i, last);
        // diffusion back out through the inflow face (column 0 holds C = 0)
        out += p.chem_diffusion * geo.area[i] * (f.value(i, 1) - f.value(i, 0)) / geo.dx;
        // advection in through the inflow face
        out -= geo.speed[i] * geo.area[i] * f.value(i, 0);
    }
    Ok(out)
}

/// Relative mismatch between the net outflow and the source production
/// `F_source·2πR·L_source`; zero when nothing is produced.
pub fn mass_balance(f: &ScalarField, p: &ScenarioParams) -> Result<f64> {
    let production = p.source_production_rate();
    let outflow = net_outflow(f, p)?;
    if production == 0.0 {
        return Ok(if outflow == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((outflow - production).abs() / production)
}

/// Node flags, laid out like [`ScalarField`] values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMask {
    n_x: usize,
    data: Vec<bool>,
}

impl NodeMask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n_x + j]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Nodes where the source contribution is below the background level.
pub fn below_background_mask(f: &ScalarField, p: &ScenarioParams) -> NodeMask {
    NodeMask {
        n_x: f.n_x,
        data: f.values.iter().map(|&v| v < p.c_background).collect(),
    }
}
