//! Geometry of the 2x2 setup.
//!
//! Two point transmitters face two equal spherical receiver bulges. The
//! bulge centers and both transmitters sit on the corners of a rectangle.
//! In the canonical frame the bulge centers lie on the z-axis, symmetric
//! about the origin (bulge 1 at negative z), and each transmitter is offset
//! along +x from its own bulge center.

use core::fmt;

use crate::{Error, Result};

pub type Point = [f64; 3];

/// How a nominal distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Reference {
    /// To the nearest point of the bulge surface (`d`), or the gap between
    /// the two surfaces (`h`).
    #[default]
    Surface,
    /// To the bulge center (`d`), or between the two centers (`h`).
    Center,
}

/// Receiver/transmitter pair of a link: `F_ij` is the hitting probability
/// at Rx `i` for a molecule released by Tx `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId {
    pub rx: u8,
    pub tx: u8,
}

impl LinkId {
    pub const L11: LinkId = LinkId { rx: 1, tx: 1 };
    pub const L12: LinkId = LinkId { rx: 1, tx: 2 };
    pub const L21: LinkId = LinkId { rx: 2, tx: 1 };
    pub const L22: LinkId = LinkId { rx: 2, tx: 2 };
    pub const ALL: [LinkId; 4] = [Self::L11, Self::L12, Self::L21, Self::L22];

    pub fn new(rx: u8, tx: u8) -> Result<Self> {
        if !(1..=2).contains(&rx) || !(1..=2).contains(&tx) {
            return Err(Error::Domain("link indices must be 1 or 2"));
        }
        Ok(Self { rx, tx })
    }

    pub fn is_own(self) -> bool {
        self.rx == self.tx
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.rx, self.tx)
    }
}

/// Validated geometry plus the diffusion coefficient.
///
/// Lengths are in µm, the diffusion coefficient in µm²/s.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    d: f64,
    h: f64,
    r_r: f64,
    diffusion: f64,
    d_reference: Reference,
    h_reference: Reference,
    tx: [Point; 2],
    rx: [Point; 2],
}

impl Topology {
    /// Builds a topology with `d` and `h` both surface-referenced.
    pub fn new(d: f64, h: f64, r_r: f64, diffusion: f64) -> Result<Self> {
        Self::with_reference(d, h, r_r, diffusion, Reference::Surface, Reference::Surface)
    }

    pub fn with_reference(
        d: f64,
        h: f64,
        r_r: f64,
        diffusion: f64,
        d_reference: Reference,
        h_reference: Reference,
    ) -> Result<Self> {
        if !(d.is_finite() && h.is_finite() && r_r.is_finite() && diffusion.is_finite()) {
            return Err(Error::Domain("topology parameters must be finite"));
        }
        if d <= 0.0 {
            return Err(Error::Domain("d must be positive"));
        }
        if r_r <= 0.0 {
            return Err(Error::Domain("r_r must be positive"));
        }
        if diffusion <= 0.0 {
            return Err(Error::Domain("diffusion coefficient must be positive"));
        }
        if h < 0.0 {
            return Err(Error::Geometry("negative bulge separation"));
        }
        let center_sep = match h_reference {
            Reference::Surface => 2.0 * r_r + h,
            Reference::Center => h,
        };
        if center_sep < 2.0 * r_r {
            return Err(Error::Geometry("receiver bulges overlap"));
        }
        let tx_offset = match d_reference {
            Reference::Surface => d + r_r,
            Reference::Center => d,
        };
        if tx_offset <= r_r {
            return Err(Error::Geometry("transmitter lies inside its bulge"));
        }
        let z = center_sep / 2.0;
        let rx = [[0.0, 0.0, -z], [0.0, 0.0, z]];
        let tx = [[tx_offset, 0.0, -z], [tx_offset, 0.0, z]];
        Ok(Self { d, h, r_r, diffusion, d_reference, h_reference, tx, rx })
    }

    /// Nominal transmitter distance as given.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Nominal bulge separation as given.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r_r(&self) -> f64 {
        self.r_r
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn d_reference(&self) -> Reference {
        self.d_reference
    }

    pub fn h_reference(&self) -> Reference {
        self.h_reference
    }

    /// Position of transmitter `i` (1 or 2).
    pub fn tx(&self, i: u8) -> Point {
        self.tx[usize::from(i) - 1]
    }

    /// Center of receiver bulge `i` (1 or 2).
    pub fn rx_center(&self, i: u8) -> Point {
        self.rx[usize::from(i) - 1]
    }

    pub fn center_separation(&self) -> f64 {
        distance(self.rx[0], self.rx[1])
    }

    /// Distance from transmitter `tx` to the surface of bulge `rx`.
    pub fn surface_distance(&self, link: LinkId) -> f64 {
        distance(self.tx(link.tx), self.rx_center(link.rx)) - self.r_r
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    libm::sqrt(dx * dx + dy * dy + dz * dz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selected_topology_is_valid() {
        let t = Topology::new(2.0, 2.0, 4.0, 50.0).unwrap();
        assert_eq!(t.center_separation(), 10.0);
        assert!((t.surface_distance(LinkId::L11) - 2.0).abs() < 1e-12);
        assert!((t.surface_distance(LinkId::L22) - 2.0).abs() < 1e-12);
        let cross = libm::sqrt(36.0 + 100.0) - 4.0;
        assert!((t.surface_distance(LinkId::L12) - cross).abs() < 1e-12);
    }

    #[test]
    fn touching_bulges_are_allowed() {
        let t = Topology::new(2.0, 0.0, 4.0, 50.0).unwrap();
        assert_eq!(t.center_separation(), 8.0);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(matches!(Topology::new(2.0, -1.0, 4.0, 50.0), Err(Error::Geometry(_))));
        assert!(matches!(Topology::new(0.0, 1.0, 4.0, 50.0), Err(Error::Domain(_))));
        assert!(matches!(Topology::new(2.0, 1.0, -4.0, 50.0), Err(Error::Domain(_))));
        assert!(matches!(Topology::new(2.0, 1.0, 4.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(Topology::new(f64::NAN, 1.0, 4.0, 50.0), Err(Error::Domain(_))));
    }

    #[test]
    fn center_reference_rejects_table_values() {
        // h = 2 between centers with r_r = 4 would intersect the spheres.
        let err = Topology::with_reference(2.0, 2.0, 4.0, 50.0, Reference::Surface, Reference::Center);
        assert!(matches!(err, Err(Error::Geometry(_))));
        let err = Topology::with_reference(2.0, 2.0, 4.0, 50.0, Reference::Center, Reference::Surface);
        assert!(matches!(err, Err(Error::Geometry(_))));
        let ok = Topology::with_reference(6.0, 10.0, 4.0, 50.0, Reference::Center, Reference::Center).unwrap();
        assert_eq!(ok.tx(1), Topology::new(2.0, 2.0, 4.0, 50.0).unwrap().tx(1));
    }

    #[test]
    fn corners_form_a_rectangle() {
        let t = Topology::new(4.0, 1.0, 2.0, 50.0).unwrap();
        let (t1, t2, c1, c2) = (t.tx(1), t.tx(2), t.rx_center(1), t.rx_center(2));
        let dot = |a: Point, b: Point, o: Point| {
            (a[0] - o[0]) * (b[0] - o[0]) + (a[1] - o[1]) * (b[1] - o[1]) + (a[2] - o[2]) * (b[2] - o[2])
        };
        assert_eq!(dot(t1, c2, c1), 0.0);
        assert_eq!(dot(t2, c1, c2), 0.0);
        assert!((distance(t1, t2) - distance(c1, c2)).abs() < 1e-12);
    }

    #[test]
    fn link_ids() {
        assert!(LinkId::L11.is_own() && LinkId::L22.is_own());
        assert!(!LinkId::L12.is_own() && !LinkId::L21.is_own());
        assert!(LinkId::new(3, 1).is_err());
        assert_eq!(std::format!("{}", LinkId::L21), "21");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn own_surface_distance_is_d(d in 0.1f64..50.0, h in 0.0f64..20.0, r in 0.1f64..20.0) {
                let t = Topology::new(d, h, r, 50.0).unwrap();
                for link in [LinkId::L11, LinkId::L22] {
                    let got = t.surface_distance(link);
                    prop_assert!((got - d).abs() <= 1e-12 * d.max(r));
                }
            }

            #[test]
            fn index_swap_is_congruent(d in 0.1f64..50.0, h in 0.0f64..20.0, r in 0.1f64..20.0) {
                let t = Topology::new(d, h, r, 50.0).unwrap();
                let pts = |a: u8, b: u8| [t.tx(a), t.tx(b), t.rx_center(a), t.rx_center(b)];
                let p = pts(1, 2);
                let q = pts(2, 1);
                for i in 0..4 {
                    for j in 0..4 {
                        prop_assert!((distance(p[i], p[j]) - distance(q[i], q[j])).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
