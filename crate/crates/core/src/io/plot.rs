//! Planar drawings of a certificate's polytopes and their images under the
//! edge operators.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::certificate::F17;
use super::{write_atomic, IoError, SCHEMA_VERSION};
use crate::ipa::MultinormCertificate;
use crate::linalg::Vector;
use crate::polytope::Variant;
use crate::system::{EdgeKind, GraphSystem};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("polytope export needs d = 2, got d = {0}")]
    DimensionNotTwo(usize),
    #[error("certificate has {cert} modes but the graph has {graph}")]
    ShapeMismatch { cert: usize, graph: usize },
    #[error("output path {0} must not end in .json (used by the sidecar)")]
    SidecarClash(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentGeometry {
    pub mode: usize,
    /// Vertex list exactly as stored in the certificate.
    pub vertices: Vec<[F17; 2]>,
    /// Counter-clockwise boundary of the unit ball.
    pub boundary: Vec<[F17; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageGeometry {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    pub kind: String,
    /// The image is of `scale · E`, with `scale = ((1+ε)·rho_hat)^{-duration}`.
    pub scale: F17,
    pub boundary: Vec<[F17; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry2d {
    pub schema_version: String,
    pub variant: Variant,
    pub step: F17,
    pub rho_hat: F17,
    pub epsilon: F17,
    pub components: Vec<ComponentGeometry>,
    pub images: Vec<ImageGeometry>,
}

fn pt(v: [f64; 2]) -> [F17; 2] {
    [F17(v[0]), F17(v[1])]
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (Andrew's monotone chain). Collinear
/// points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Points whose hull is the unit ball of the given variant.
fn ball_points(vs: &[[f64; 2]], variant: Variant) -> Vec<[f64; 2]> {
    match variant {
        Variant::Symmetric => vs.iter().flat_map(|&[x, y]| [[x, y], [-x, -y]]).collect(),
        Variant::Positive => {
            // In the plane the down-closure of conv(V) inside the orthant is
            // the hull of V, its axis projections and the origin.
            let mut out = vec![[0.0, 0.0]];
            for &[x, y] in vs {
                out.extend([[x, y], [x, 0.0], [0.0, y]]);
            }
            out
        }
    }
}

fn as_pair(v: &Vector) -> [f64; 2] {
    [v[0], v[1]]
}

/// Builds the planar geometry of `cert` on the graph `g`.
pub fn geometry_2d(cert: &MultinormCertificate, g: &GraphSystem) -> Result<Geometry2d, PlotError> {
    let m = &cert.multinorm;
    if m.dim() != 2 {
        return Err(PlotError::DimensionNotTwo(m.dim()));
    }
    if m.len() != g.vertex_count() {
        return Err(PlotError::ShapeMismatch {
            cert: m.len(),
            graph: g.vertex_count(),
        });
    }
    let variant = m.variant();
    let balls: Vec<Vec<[f64; 2]>> = m
        .components
        .iter()
        .map(|c| ball_points(&c.vertices().iter().map(as_pair).collect::<Vec<_>>(), variant))
        .collect();
    let components = m
        .components
        .iter()
        .enumerate()
        .map(|(j, c)| ComponentGeometry {
            mode: j,
            vertices: c.vertices().iter().map(|v| pt(as_pair(v))).collect(),
            boundary: convex_hull(&balls[j]).into_iter().map(pt).collect(),
        })
        .collect();
    let rate = (1.0 + cert.epsilon) * cert.rho_hat;
    let images = g
        .edges()
        .iter()
        .enumerate()
        .map(|(ei, e)| {
            let scale = rate.powf(-e.duration);
            let mapped: Vec<[f64; 2]> = balls[e.from]
                .iter()
                .map(|&[x, y]| as_pair(&(&e.operator * Vector::from_vec(vec![x, y]) * scale)))
                .collect();
            ImageGeometry {
                edge: ei,
                from: e.from,
                to: e.to,
                kind: match e.kind {
                    EdgeKind::Loop => "loop".into(),
                    EdgeKind::Switch => "switch".into(),
                },
                scale: F17(scale),
                boundary: convex_hull(&mapped).into_iter().map(pt).collect(),
            }
        })
        .collect();
    Ok(Geometry2d {
        schema_version: SCHEMA_VERSION.into(),
        variant,
        step: F17(cert.step),
        rho_hat: F17(cert.rho_hat),
        epsilon: F17(cert.epsilon),
        components,
        images,
    })
}

const PALETTE: [&str; 6] = ["#1f5fbf", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#2c3e50"];

fn polygon(out: &mut String, pts: &[[F17; 2]], to_px: &dyn Fn([f64; 2]) -> (f64, f64), style: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = to_px([p[0].0, p[1].0]);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(out, "    <polygon points=\"{}\" {style}/>", coords.join(" "));
}

/// SVG with one layer of unit balls and one layer of edge images per
/// target mode.
pub fn render_svg(geo: &Geometry2d) -> String {
    let all = geo
        .components
        .iter()
        .flat_map(|c| c.boundary.iter())
        .chain(geo.images.iter().flat_map(|i| i.boundary.iter()));
    let r = all
        .map(|p| p[0].0.abs().max(p[1].0.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.1;
    let size = 600.0;
    let to_px = move |[x, y]: [f64; 2]| ((x / r + 1.0) * size / 2.0, (1.0 - y / r) * size / 2.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let (ox, oy) = to_px([0.0, 0.0]);
    let _ = writeln!(
        out,
        "  <g id=\"axes\" stroke=\"#999\" stroke-width=\"0.5\">\n    <line x1=\"0\" y1=\"{oy:.3}\" x2=\"{size}\" y2=\"{oy:.3}\"/>\n    <line x1=\"{ox:.3}\" y1=\"0\" x2=\"{ox:.3}\" y2=\"{size}\"/>\n  </g>"
    );
    let _ = writeln!(out, "  <g id=\"images\">");
    for im in &geo.images {
        let colour = PALETTE[im.to % PALETTE.len()];
        let style = format!(
            "fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" stroke-opacity=\"0.7\" data-edge=\"{}\" data-from=\"{}\" data-to=\"{}\"",
            im.edge, im.from, im.to
        );
        polygon(&mut out, &im.boundary, &to_px, &style);
    }
    let _ = writeln!(out, "  </g>");
    let _ = writeln!(out, "  <g id=\"polytopes\">");
    for c in &geo.components {
        let colour = PALETTE[c.mode % PALETTE.len()];
        let style = format!(
            "fill=\"none\" stroke=\"{colour}\" stroke-width=\"2.5\" stroke-dasharray=\"8 4\" data-mode=\"{}\"",
            c.mode
        );
        polygon(&mut out, &c.boundary, &to_px, &style);
    }
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    out
}

pub fn sidecar_path(svg: &Path) -> PathBuf {
    svg.with_extension("json")
}

/// Writes `path` (SVG) and the coordinate sidecar next to it; returns the
/// sidecar path.
pub fn export_polytopes_2d(cert: &MultinormCertificate, g: &GraphSystem, path: &Path) -> Result<PathBuf, PlotError> {
    if path.extension().is_some_and(|e| e == "json") {
        return Err(PlotError::SidecarClash(path.display().to_string()));
    }
    let geo = geometry_2d(cert, g)?;
    write_atomic(path, render_svg(&geo).as_bytes())?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&geo).expect("geometry serializes");
    json.push('\n');
    write_atomic(&side, json.as_bytes())?;
    Ok(side)
}

pub fn load_sidecar(path: &Path) -> Result<Geometry2d, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(&path.display().to_string(), &e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{leading_cycle_search, SearchConfig};
    use crate::ipa::{run_ipa, IpaConfig};
    use crate::linalg::Matrix;
    use crate::polytope::PolytopeNorm;
    use crate::system::tests::example1;
    use crate::system::{build_discretization, validate_system};

    fn certify(sys: &crate::system::SwitchingSystem, h: f64) -> (MultinormCertificate, GraphSystem) {
        let g = build_discretization(sys, h).unwrap();
        let c = leading_cycle_search(&g, &SearchConfig::default()).unwrap().best;
        (run_ipa(&g, &c, &IpaConfig::default()).unwrap(), g)
    }

    #[test]
    fn hull_of_square_with_interior() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]]);
        assert_eq!(h, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn example1_images_inscribed() {
        let (cert, g) = certify(&example1(), 0.2);
        let geo = geometry_2d(&cert, &g).unwrap();
        assert_eq!(geo.components.len(), 2);
        assert_eq!(geo.images.len(), 4);
        for im in &geo.images {
            let target = &cert.multinorm.components[im.to];
            for p in &im.boundary {
                let n = target.norm_eval(&Vector::from_vec(vec![p[0].0, p[1].0])).unwrap();
                assert!(n <= 1.0 + 1e-8, "edge {} point norm {n}", im.edge);
            }
        }
        let svg = render_svg(&geo);
        assert_eq!(svg.matches("<polygon").count(), 6);
    }

    #[test]
    fn zero_regime_is_cross_polytope() {
        let sys = validate_system(vec![Matrix::zeros(2, 2)], 1.0).unwrap();
        let (cert, g) = certify(&sys, 0.5);
        let geo = geometry_2d(&cert, &g).unwrap();
        assert_eq!(geo.components.len(), 1);
        let ball = &cert.multinorm.components[0];
        let cross = PolytopeNorm::cross_polytope(2, ball.variant());
        // Same unit ball as the ℓ¹ ball: every boundary point has norm 1 in both.
        assert_eq!(geo.components[0].boundary.len(), 4);
        for p in &geo.components[0].boundary {
            let x = Vector::from_vec(vec![p[0].0, p[1].0]);
            assert!((cross.norm_eval(&x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_not_two() {
        let sys = validate_system(vec![-Matrix::identity(3, 3)], 1.0).unwrap();
        let (cert, g) = certify(&sys, 0.5);
        assert!(matches!(geometry_2d(&cert, &g), Err(PlotError::DimensionNotTwo(3))));
    }

    #[test]
    fn sidecar_roundtrip() {
        let (cert, g) = certify(&example1(), 0.2);
        let dir = tempfile::tempdir().unwrap();
        let svg = dir.path().join("ex1.svg");
        let side = export_polytopes_2d(&cert, &g, &svg).unwrap();
        assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
        let back = load_sidecar(&side).unwrap();
        for (c, bc) in cert.multinorm.components.iter().zip(&back.components) {
            let got: Vec<[f64; 2]> = bc.vertices.iter().map(|p| [p[0].0, p[1].0]).collect();
            let want: Vec<[f64; 2]> = c.vertices().iter().map(as_pair).collect();
            assert_eq!(got, want);
        }
        assert_eq!(back, geometry_2d(&cert, &g).unwrap());
        assert!(matches!(
            export_polytopes_2d(&cert, &g, &dir.path().join("x.json")),
            Err(PlotError::SidecarClash(_))
        ));
    }
}
