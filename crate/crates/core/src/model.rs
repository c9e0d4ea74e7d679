//! Planar switching affine systems: two affine modes separated by a line.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

/// One affine dynamics `ẋ = A·x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMode {
    pub a: Mat2,
    pub b: Vec2,
}

impl AffineMode {
    pub const fn new(a: Mat2, b: Vec2) -> Self {
        Self { a, b }
    }

    /// Vector field at `x`.
    pub fn rhs(&self, x: Vec2) -> Vec2 {
        self.a.mul_vec(x) + self.b
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    /// Time-reversed dynamics.
    pub fn reversed(&self) -> AffineMode {
        AffineMode::new(self.a.scale(-1.0), -self.b)
    }
}

/// Relative determinant threshold for a unique equilibrium.
pub const SINGULAR_DET_TOL: f64 = 1e-12;

/// Unique equilibrium `x_R` with `A·x_R + b = 0`.
pub fn equilibrium(mode: &AffineMode) -> Result<Vec2> {
    let det = mode.a.det();
    let scale = mode.a.norm();
    if !(det.abs() > SINGULAR_DET_TOL * scale * scale) {
        return Err(Error::SingularSystem { det });
    }
    mode.a.solve(-mode.b).ok_or(Error::SingularSystem { det })
}

/// The line `C·x = d`; `C·x ≤ d` is the region of mode I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "LineJson")]
pub struct SwitchingLine {
    pub c11: f64,
    pub c12: f64,
    pub d: f64,
}

impl SwitchingLine {
    pub fn new(c11: f64, c12: f64, d: f64) -> Result<Self> {
        if !(c11.is_finite() && c12.is_finite() && d.is_finite()) {
            return Err(Error::NonFiniteInput("switching line".into()));
        }
        if c11 == 0.0 && c12 == 0.0 {
            return Err(Error::InvalidInput("switching line needs C ≠ (0, 0)".into()));
        }
        Ok(Self { c11, c12, d })
    }

    pub fn c(&self) -> Vec2 {
        Vec2::new(self.c11, self.c12)
    }

    /// `C·v` for a direction or velocity.
    pub fn project(&self, v: Vec2) -> f64 {
        self.c11 * v.x1 + self.c12 * v.x2
    }

    /// Signed offset `C·x − d`.
    pub fn offset(&self, x: Vec2) -> f64 {
        self.project(x) - self.d
    }

    /// Band within which a point counts as lying on the line.
    pub fn boundary_tol(&self) -> f64 {
        1e-9 * self.d.abs().max(1.0)
    }

    pub fn contains(&self, x: Vec2, tol: f64) -> bool {
        self.offset(x).abs() <= tol
    }

    /// Unit normal pointing into the region of mode II.
    pub fn unit_normal(&self) -> Vec2 {
        let c = self.c();
        c * (1.0 / c.norm())
    }

    /// Unit direction along the line.
    pub fn direction(&self) -> Vec2 {
        let n = self.unit_normal();
        Vec2::new(-n.x2, n.x1)
    }

    /// Orthogonal projection of `x` onto the line.
    pub fn project_point(&self, x: Vec2) -> Vec2 {
        let c = self.c();
        x - c * (self.offset(x) / c.norm_sq())
    }

    /// Mirror image of `x` across the line.
    pub fn reflect(&self, x: Vec2) -> Vec2 {
        let c = self.c();
        x - c * (2.0 * self.offset(x) / c.norm_sq())
    }
}

#[derive(Serialize)]
struct LineJson {
    #[serde(rename = "C")]
    c: [f64; 2],
    d: f64,
}

impl From<SwitchingLine> for LineJson {
    fn from(l: SwitchingLine) -> LineJson {
        LineJson {
            c: [l.c11, l.c12],
            d: l.d,
        }
    }
}

/// Label of the active dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeId {
    I,
    II,
}

impl ModeId {
    pub fn other(self) -> ModeId {
        match self {
            ModeId::I => ModeId::II,
            ModeId::II => ModeId::I,
        }
    }

    /// 1 or 2, as written in CSV files.
    pub fn number(self) -> u8 {
        match self {
            ModeId::I => 1,
            ModeId::II => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<ModeId> {
        match n {
            1 => Some(ModeId::I),
            2 => Some(ModeId::II),
            _ => None,
        }
    }

    /// Sign of `C·x − d` inside the region owned by this mode.
    pub fn side(self) -> f64 {
        match self {
            ModeId::I => -1.0,
            ModeId::II => 1.0,
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeId::I => write!(f, "I"),
            ModeId::II => write!(f, "II"),
        }
    }
}

/// A planar switching affine system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct Psas {
    pub mode_i: AffineMode,
    pub mode_ii: AffineMode,
    pub line: SwitchingLine,
}

impl Psas {
    pub fn new(mode_i: AffineMode, mode_ii: AffineMode, line: SwitchingLine) -> Result<Self> {
        if !mode_i.is_finite() || !mode_ii.is_finite() {
            return Err(Error::NonFiniteInput("mode parameters".into()));
        }
        Ok(Self { mode_i, mode_ii, line })
    }

    pub fn mode(&self, id: ModeId) -> &AffineMode {
        match id {
            ModeId::I => &self.mode_i,
            ModeId::II => &self.mode_ii,
        }
    }

    /// `C·(A·x + b)` for the given mode: the rate at which `x` moves across
    /// the line. Every gradient condition is evaluated through this.
    pub fn gradient_projection(&self, id: ModeId, x: Vec2) -> f64 {
        self.line.project(self.mode(id).rhs(x))
    }

    /// Same orbits traversed backwards in time.
    pub fn time_reversed(&self) -> Psas {
        Psas {
            mode_i: self.mode_i.reversed(),
            mode_ii: self.mode_ii.reversed(),
            line: self.line,
        }
    }

    /// Flattened parameters `[A^I (row-major), b^I, A^II, b^II]`.
    pub fn to_params(&self) -> [f64; 12] {
        let (a, b, c, d) = (self.mode_i.a, self.mode_i.b, self.mode_ii.a, self.mode_ii.b);
        [
            a.a11, a.a12, a.a21, a.a22, b.x1, b.x2, c.a11, c.a12, c.a21, c.a22, d.x1, d.x2,
        ]
    }

    pub fn from_params(u: &[f64; 12], line: SwitchingLine) -> Psas {
        Psas {
            mode_i: AffineMode::new(Mat2::new(u[0], u[1], u[2], u[3]), Vec2::new(u[4], u[5])),
            mode_ii: AffineMode::new(Mat2::new(u[6], u[7], u[8], u[9]), Vec2::new(u[10], u[11])),
            line,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Psas> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk model layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "A1")]
    pub a1: [[f64; 2]; 2],
    pub b1: [f64; 2],
    #[serde(rename = "A2")]
    pub a2: [[f64; 2]; 2],
    pub b2: [f64; 2],
    #[serde(rename = "C")]
    pub c: [f64; 2],
    pub d: f64,
}

impl TryFrom<ModelFile> for Psas {
    type Error = Error;

    fn try_from(m: ModelFile) -> Result<Psas> {
        let line = SwitchingLine::new(m.c[0], m.c[1], m.d)?;
        Psas::new(
            AffineMode::new(m.a1.into(), m.b1.into()),
            AffineMode::new(m.a2.into(), m.b2.into()),
            line,
        )
    }
}

impl From<Psas> for ModelFile {
    fn from(p: Psas) -> ModelFile {
        ModelFile {
            a1: p.mode_i.a.into(),
            b1: p.mode_i.b.into(),
            a2: p.mode_ii.a.into(),
            b2: p.mode_ii.b.into(),
            c: [p.line.c11, p.line.c12],
            d: p.line.d,
        }
    }
}

/// Which dynamics is active at `x`.
///
/// Off the line the region decides. On the line the mode active just
/// before (`prev`) keeps ownership; without history the initialization
/// convention applies: mode II iff its flow leaves the line into its own
/// region and either mode I's flow does too or mode II's crossing rate is
/// larger in magnitude. A zero mode-II rate falls through to mode I.
pub fn mode_select(psas: &Psas, x: Vec2, prev: Option<ModeId>) -> ModeId {
    let offset = psas.line.offset(x);
    let tol = psas.line.boundary_tol();
    if offset < -tol {
        return ModeId::I;
    }
    if offset > tol {
        return ModeId::II;
    }
    if let Some(p) = prev {
        return p;
    }
    let g2 = psas.gradient_projection(ModeId::II, x);
    let g1 = psas.gradient_projection(ModeId::I, x);
    if g2 > 0.0 && (g1 >= 0.0 || g2.abs() > g1.abs()) {
        ModeId::II
    } else {
        ModeId::I
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn equilibria_of_design_example() {
        let p = reference::design_example();
        let xi = equilibrium(&p.mode_i).unwrap();
        let xii = equilibrium(&p.mode_ii).unwrap();
        assert!(xi.distance(Vec2::new(1.0, 0.0)) < 1e-14);
        assert!(xii.distance(Vec2::new(-0.25, -6.0)) < 1e-14);
    }

    #[test]
    fn homogeneous_equilibrium_is_origin() {
        let m = AffineMode::new(Mat2::new(-1.0, 2.0, 0.5, -3.0), Vec2::ZERO);
        assert_eq!(equilibrium(&m).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn singular_matrix_has_no_equilibrium() {
        let m = AffineMode::new(Mat2::new(1.0, 2.0, 2.0, 4.0), Vec2::new(1.0, 0.0));
        assert!(matches!(equilibrium(&m), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn mode_select_examples() {
        let p = reference::design_example();
        assert_eq!(mode_select(&p, Vec2::new(-1.0, 0.0), None), ModeId::I);
        assert_eq!(mode_select(&p, Vec2::new(1.0, 0.0), None), ModeId::II);

        // C·(A^II·x + b^II) = −0.16 < 0 at the lower crossing
        let low = Vec2::new(0.0, -5.160);
        assert!((p.gradient_projection(ModeId::II, low) + 0.16).abs() < 1e-12);
        assert_eq!(mode_select(&p, low, None), ModeId::I);

        // 2.606 > 0 and 0.606 ≥ 0 at the upper crossing
        let high = Vec2::new(0.0, -2.394);
        assert!((p.gradient_projection(ModeId::II, high) - 2.606).abs() < 1e-12);
        assert!((p.gradient_projection(ModeId::I, high) - 0.606).abs() < 1e-12);
        assert_eq!(mode_select(&p, high, None), ModeId::II);
    }

    #[test]
    fn on_line_with_history_keeps_previous_mode() {
        let p = reference::design_example();
        let x = Vec2::new(0.0, -2.394);
        assert_eq!(mode_select(&p, x, Some(ModeId::I)), ModeId::I);
        assert_eq!(mode_select(&p, x, Some(ModeId::II)), ModeId::II);
        // off the line, history is ignored
        assert_eq!(mode_select(&p, Vec2::new(0.5, -2.0), Some(ModeId::I)), ModeId::II);
    }

    #[test]
    fn zero_mode_two_rate_falls_through_to_mode_one() {
        let line = SwitchingLine::new(1.0, 0.0, 0.0).unwrap();
        let m = AffineMode::new(Mat2::diag(-1.0, -1.0), Vec2::ZERO);
        let p = Psas::new(m, m, line).unwrap();
        assert_eq!(mode_select(&p, Vec2::new(0.0, 1.0), None), ModeId::I);
    }

    #[test]
    fn model_json_uses_exact_keys() {
        let p = reference::design_example();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(
            text,
            r#"{"A1":[[-3.0,1.0],[3.0,-2.0]],"b1":[3.0,-3.0],"A2":[[-4.0,1.0],[-3.0,0.25]],"b2":[5.0,0.75],"C":[1.0,0.0],"d":0.0}"#
        );
        let back: Psas = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn model_json_rejects_zero_line_and_unknown_keys() {
        let bad = r#"{"A1":[[-3,1],[3,-2]],"b1":[3,-3],"A2":[[-4,1],[-3,0.25]],"b2":[5,0.75],"C":[0,0],"d":0}"#;
        assert!(serde_json::from_str::<Psas>(bad).is_err());
        let extra = r#"{"A1":[[-3,1],[3,-2]],"b1":[3,-3],"A2":[[-4,1],[-3,0.25]],"b2":[5,0.75],"C":[1,0],"d":0,"x":1}"#;
        assert!(serde_json::from_str::<Psas>(extra).is_err());
    }

    #[test]
    fn line_geometry() {
        let l = SwitchingLine::new(0.4115, 1.0, 1.132).unwrap();
        let x = Vec2::new(0.3, 0.2);
        let p = l.project_point(x);
        assert!(l.offset(p).abs() < 1e-15);
        let r = l.reflect(x);
        assert!((l.offset(r) + l.offset(x)).abs() < 1e-14);
        assert!(l.project(l.direction()).abs() < 1e-15);
        assert!(l.project(l.unit_normal()) > 0.0);
    }
}
