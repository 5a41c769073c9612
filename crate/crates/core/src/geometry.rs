//! Spherical head geometry and the analytic lead field.
//!
//! The forward model is the potential of a current dipole in an infinite
//! homogeneous conductor, sampled on electrodes lying on a spherical scalp and
//! re-referenced to the electrode average. It is not a realistic head model,
//! but it reproduces the depth attenuation that standardization compensates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Electrodes on the upper hemisphere of the scalp sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeArray {
    positions: Vec<Vec3>,
    scalp_radius: f64,
}

impl ElectrodeArray {
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn scalp_radius(&self) -> f64 {
        self.scalp_radius
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Dipole locations on a cubic lattice clipped to the brain sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpace {
    nodes: Vec<Vec3>,
    brain_radius: f64,
    node_spacing: f64,
}

impl SourceSpace {
    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn brain_radius(&self) -> f64 {
        self.brain_radius
    }

    pub fn node_spacing(&self) -> f64 {
        self.node_spacing
    }

    /// Index of the node closest to `target`; ties go to the lowest index.
    pub fn nearest_node(&self, target: &Vec3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p - target).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Nodes whose distance to `center` is at most `radius`.
    pub fn nodes_within(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| (*p - center).norm() <= radius)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Average-referenced gain matrix, `m` electrodes by `3N` dipole components.
///
/// Column `3j + a` holds the potentials of a unit (1 A·m) dipole at node `j`
/// oriented along axis `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    matrix: DMatrix<f64>,
    conductivity: f64,
}

impl LeadField {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }

    pub fn n_electrodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.ncols() / 3
    }

    /// Scalp topography of a unit-amplitude dipole at `node` with moment
    /// direction `dir`.
    pub fn topography(&self, node: usize, dir: &Vec3) -> nalgebra::DVector<f64> {
        let block = self.matrix.columns(3 * node, 3);
        block * dir
    }
}

/// Deterministic Fibonacci-spiral layout restricted to `z >= 0`.
///
/// Point `i` sits at height `z_i = 1 - (i + 1/2) / count` (unit sphere) and
/// azimuth `i * golden_angle`.
pub fn build_electrode_array(count: usize, scalp_radius: f64) -> Result<ElectrodeArray> {
    if count < 2 {
        return Err(Error::invalid(format!(
            "fewer than 2 electrodes ({count}); average referencing needs at least 2"
        )));
    }
    if !(scalp_radius > 0.0 && scalp_radius.is_finite()) {
        return Err(Error::invalid(format!("scalp radius must be positive, got {scalp_radius}")));
    }
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let positions = (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden_angle * i as f64;
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * scalp_radius
        })
        .collect();
    Ok(ElectrodeArray { positions, scalp_radius })
}

/// Cubic lattice with step `node_spacing`, keeping points with norm strictly
/// below `brain_radius`, ordered lexicographically in (x, y, z).
pub fn build_source_space(node_spacing: f64, brain_radius: f64) -> Result<SourceSpace> {
    if !(node_spacing > 0.0 && node_spacing.is_finite()) {
        return Err(Error::invalid(format!("node spacing must be positive, got {node_spacing}")));
    }
    if !(brain_radius > node_spacing) {
        return Err(Error::invalid(format!(
            "node spacing {node_spacing} exceeds brain radius {brain_radius}"
        )));
    }
    let reach = (brain_radius / node_spacing).floor() as i64 + 1;
    let mut nodes = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            for k in -reach..=reach {
                let p = Vec3::new(i as f64, j as f64, k as f64) * node_spacing;
                if p.norm() < brain_radius {
                    nodes.push(p);
                }
            }
        }
    }
    if nodes.len() < 2 {
        return Err(Error::invalid("source space needs at least 2 nodes"));
    }
    Ok(SourceSpace { nodes, brain_radius, node_spacing })
}

/// Potential (volts) at `electrode` of a current dipole in an infinite
/// homogeneous medium: `moment · d / (4π σ |d|³)` with `d = electrode - dipole`.
pub fn dipole_potential(
    dipole: &Vec3,
    moment: &Vec3,
    electrode: &Vec3,
    conductivity: f64,
) -> Result<f64> {
    let d = electrode - dipole;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::Singular(format!("dipole at {dipole:?} coincides with electrode")));
    }
    Ok(moment.dot(&d) / (4.0 * PI * conductivity * r * r * r))
}

pub fn assemble_lead_field(
    space: &SourceSpace,
    electrodes: &ElectrodeArray,
    conductivity: f64,
) -> Result<LeadField> {
    if !(conductivity > 0.0 && conductivity.is_finite()) {
        return Err(Error::invalid(format!("conductivity must be positive, got {conductivity}")));
    }
    let m = electrodes.len();
    let mut matrix = DMatrix::zeros(m, 3 * space.len());
    for (j, node) in space.nodes().iter().enumerate() {
        for axis in 0..3 {
            let mut moment = Vec3::zeros();
            moment[axis] = 1.0;
            let col = 3 * j + axis;
            for (e, pos) in electrodes.positions().iter().enumerate() {
                matrix[(e, col)] = dipole_potential(node, &moment, pos, conductivity)?;
            }
            let mean = matrix.column(col).mean();
            matrix.column_mut(col).add_scalar_mut(-mean);
            if matrix.column(col).amax() == 0.0 {
                return Err(Error::numerical(format!(
                    "lead field column {col} (node {j}, axis {axis}) is identically zero"
                )));
            }
        }
    }
    Ok(LeadField { matrix, conductivity })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn electrode_count_checked() {
        assert!(matches!(build_electrode_array(1, 0.09), Err(Error::InvalidArgument(_))));
        assert!(build_electrode_array(8, 0.0).is_err());
        assert!(build_electrode_array(8, -1.0).is_err());
    }

    #[test]
    fn electrodes_on_upper_hemisphere() {
        let arr = build_electrode_array(64, 0.09).unwrap();
        assert_eq!(arr.len(), 64);
        for p in arr.positions() {
            assert!(((p.norm() - 0.09) / 0.09).abs() < 1e-12);
            assert!(p.z >= 0.0);
        }
    }

    #[test]
    fn electrode_min_angular_separation() {
        let arr = build_electrode_array(64, 0.09).unwrap();
        let pos = arr.positions();
        let mut min_angle = f64::INFINITY;
        let mut pairs = 0;
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                let c = pos[i].dot(&pos[j]) / (pos[i].norm() * pos[j].norm());
                min_angle = min_angle.min(c.clamp(-1.0, 1.0).acos().to_degrees());
                pairs += 1;
            }
        }
        assert_eq!(pairs, 2016);
        assert!(min_angle > 10.0, "min separation {min_angle}");
        // reference value from an independent scalar re-implementation of the spiral
        assert!((min_angle - MIN_SEPARATION_64_DEG).abs() < 1e-9, "{min_angle}");
    }

    const MIN_SEPARATION_64_DEG: f64 = 15.701_373_511_524_13;

    #[test]
    fn electrode_layout_deterministic() {
        assert_eq!(build_electrode_array(64, 0.09).unwrap(), build_electrode_array(64, 0.09).unwrap());
    }

    #[test]
    fn source_space_rejects_bad_spacing() {
        assert!(build_source_space(0.2, 0.08).is_err());
        assert!(build_source_space(0.0, 0.08).is_err());
    }

    #[test]
    fn source_space_contains_origin() {
        let s = build_source_space(0.05, 0.08).unwrap();
        assert!(s.nodes().iter().any(|p| p.norm() == 0.0));
    }

    #[test]
    fn source_space_count_matches_enumeration() {
        let h = 0.01;
        let r = 0.08;
        // independent enumeration over integer triples
        let mut count = 0;
        for i in -10i32..=10 {
            for j in -10i32..=10 {
                for k in -10i32..=10 {
                    let n2 = ((i * i + j * j + k * k) as f64) * h * h;
                    if n2.sqrt() < r {
                        count += 1;
                    }
                }
            }
        }
        let s = build_source_space(h, r).unwrap();
        assert_eq!(s.len(), count);
        for p in s.nodes() {
            assert!(p.norm() < r);
        }
        // lexicographic ordering in x, then y, then z
        for w in s.nodes().windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((a.x, a.y, a.z) < (b.x, b.y, b.z));
        }
    }

    #[test]
    fn dipole_potential_closed_forms() {
        let q = 2e-8;
        let r = 0.09;
        let s = 0.33;
        let v = dipole_potential(&Vec3::zeros(), &Vec3::new(0.0, 0.0, q), &Vec3::new(r, 0.0, 0.0), s)
            .unwrap();
        assert_eq!(v, 0.0);
        let v = dipole_potential(&Vec3::zeros(), &Vec3::new(0.0, 0.0, q), &Vec3::new(0.0, 0.0, r), s)
            .unwrap();
        let expected = q / (4.0 * PI * s * r * r);
        assert!(((v - expected) / expected).abs() < 1e-14);
    }

    #[test]
    fn dipole_potential_hand_evaluation() {
        // d = (0.09, 0, -0.05), |d|^2 = 0.0106, moment·d = 9e-10
        let v = dipole_potential(
            &Vec3::new(0.0, 0.0, 0.05),
            &Vec3::new(1e-8, 0.0, 0.0),
            &Vec3::new(0.09, 0.0, 0.0),
            0.33,
        )
        .unwrap();
        let dist = 0.0106f64.sqrt();
        let expected = 9e-10 / (4.0 * PI * 0.33 * dist * dist * dist);
        assert!(((v - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn dipole_potential_singular() {
        let p = Vec3::new(0.01, 0.02, 0.03);
        assert!(matches!(
            dipole_potential(&p, &Vec3::x(), &p, 0.33),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn lead_field_average_referenced() {
        let space = build_source_space(0.02, 0.078).unwrap();
        let el = build_electrode_array(32, 0.09).unwrap();
        let lf = assemble_lead_field(&space, &el, 0.33).unwrap();
        assert_eq!(lf.matrix().shape(), (32, 3 * space.len()));
        for c in lf.matrix().column_iter() {
            assert!(c.sum().abs() <= 1e-10 * c.amax());
            assert!(c.amax() > 0.0);
        }
    }

    #[test]
    fn lead_field_rotational_symmetry() {
        // a ring of electrodes at one polar angle plus the vertex
        let r = 0.09;
        let polar = 0.7f64;
        let mut positions: Vec<Vec3> = (0..6)
            .map(|i| {
                let phi = i as f64 * PI / 3.0;
                Vec3::new(polar.sin() * phi.cos(), polar.sin() * phi.sin(), polar.cos()) * r
            })
            .collect();
        positions.push(Vec3::new(0.0, 0.0, r));
        let el = ElectrodeArray { positions, scalp_radius: r };
        let space = SourceSpace {
            nodes: vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 0.03)],
            brain_radius: 0.078,
            node_spacing: 0.03,
        };
        let lf = assemble_lead_field(&space, &el, 0.33).unwrap();
        let col = lf.matrix().column(2);
        for i in 1..6 {
            assert!((col[i] - col[0]).abs() <= 1e-15 * col.amax());
        }
    }

    #[test]
    fn superficial_column_dominates_deep() {
        let el = build_electrode_array(64, 0.09).unwrap();
        let space = SourceSpace {
            nodes: vec![Vec3::new(0.0, 0.0, 0.02), Vec3::new(0.0, 0.0, 0.07)],
            brain_radius: 0.078,
            node_spacing: 0.05,
        };
        let lf = assemble_lead_field(&space, &el, 0.33).unwrap();
        for axis in 0..3 {
            let deep = lf.matrix().column(axis).amax();
            let sup = lf.matrix().column(3 + axis).amax();
            assert!(sup > deep, "axis {axis}: {sup} vs {deep}");
        }
    }

    #[test]
    fn column_norm_decreases_with_depth_along_ray() {
        let el = build_electrode_array(64, 0.09).unwrap();
        let dir = Vec3::new(0.3, -0.2, 0.9).normalize();
        let nodes: Vec<Vec3> = (1..=14).rev().map(|k| dir * (0.005 * k as f64)).collect();
        let space = SourceSpace { nodes, brain_radius: 0.078, node_spacing: 0.005 };
        let lf = assemble_lead_field(&space, &el, 0.33).unwrap();
        let norms: Vec<f64> = (0..space.len()).map(|j| lf.topography(j, &dir).norm()).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0], "{norms:?}");
        }
    }

    #[test]
    fn lead_field_bit_identical() {
        let space = build_source_space(0.03, 0.078).unwrap();
        let el = build_electrode_array(16, 0.09).unwrap();
        let a = assemble_lead_field(&space, &el, 0.33).unwrap();
        let b = assemble_lead_field(&space, &el, 0.33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nearest_node_and_region() {
        let s = build_source_space(0.012, 0.078).unwrap();
        let target = Vec3::new(-0.024, 0.0, 0.012);
        let j = s.nearest_node(&target);
        assert!((s.nodes()[j] - target).norm() < 1e-12);
        let region = s.nodes_within(&target, 0.015);
        assert!(region.contains(&j));
        // the 6 face neighbours at 12 mm are inside, diagonal ones at ~17 mm are not
        assert_eq!(region.len(), 7);
    }
}
