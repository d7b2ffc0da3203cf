//! Lattice points, balls and paths.
//!
//! Every point is stored as a [`Site`]: three 21-bit biased coordinate fields
//! packed into one `u64`. A unit step is a single add or subtract of a field
//! unit, so walkers never decode coordinates in their inner loop, and the
//! packed word doubles as the occupancy key for hash maps.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

const FIELD_BITS: u32 = 21;
const FIELD_MASK: u64 = (1 << FIELD_BITS) - 1;
const BIAS: i64 = 1 << (FIELD_BITS - 1);

/// Largest absolute coordinate representable in a packed [`Site`].
pub const MAX_COORD: i64 = BIAS - 1;

/// Lattice dimension. Only the plane and space are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub const fn get(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Number of nearest neighbours, `2d`.
    pub const fn degree(self) -> u32 {
        2 * self.get() as u32
    }

    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(LabError::UnsupportedDimension(other)),
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        Dim::from_usize(value as usize).map_err(|e| e.to_string())
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.get() as u8
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// A point of `Z^2` or `Z^3`. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    coords: [i32; 3],
    dim: Dim,
}

impl LatticePoint {
    pub fn new(coords: &[i32]) -> Result<Self> {
        let dim = Dim::from_usize(coords.len())?;
        let mut c = [0; 3];
        c[..coords.len()].copy_from_slice(coords);
        for &x in coords {
            if (x as i64).abs() > MAX_COORD {
                return Err(LabError::CoordinateOverflow(x as i64));
            }
        }
        Ok(Self { coords: c, dim })
    }

    pub const fn origin(dim: Dim) -> Self {
        Self { coords: [0; 3], dim }
    }

    /// Unit vector along `axis` with the given sign.
    pub fn unit(dim: Dim, axis: usize, positive: bool) -> Self {
        let mut coords = [0; 3];
        coords[axis] = if positive { 1 } else { -1 };
        Self { coords, dim }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim.get()]
    }

    pub fn norm2(&self) -> i64 {
        self.coords.iter().map(|&c| c as i64 * c as i64).sum()
    }

    pub fn dist2(&self, other: &LatticePoint) -> i64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                d * d
            })
            .sum()
    }

    pub fn is_adjacent(&self, other: &LatticePoint) -> bool {
        self.dim == other.dim && self.dist2(other) == 1
    }

    pub fn offset(&self, delta: &LatticePoint) -> LatticePoint {
        let mut coords = self.coords;
        for (c, d) in coords.iter_mut().zip(delta.coords.iter()) {
            *c += d;
        }
        LatticePoint { coords, dim: self.dim }
    }

    pub fn site(&self) -> Site {
        let mut packed = 0u64;
        for (axis, &c) in self.coords.iter().enumerate() {
            packed |= ((c as i64 + BIAS) as u64) << (FIELD_BITS * axis as u32);
        }
        Site(packed)
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

/// A packed lattice point. Never zero, so zero can serve as an empty-slot marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub u64);

impl Site {
    #[inline]
    pub fn coord(self, axis: usize) -> i32 {
        (((self.0 >> (FIELD_BITS * axis as u32)) & FIELD_MASK) as i64 - BIAS) as i32
    }

    pub fn point(self, dim: Dim) -> LatticePoint {
        let mut coords = [0; 3];
        for (axis, c) in coords.iter_mut().enumerate().take(dim.get()) {
            *c = self.coord(axis);
        }
        LatticePoint { coords, dim }
    }

    /// The neighbour in direction `dir ∈ 0..2d`: axis `dir / 2`, negative when `dir` is odd.
    #[inline]
    pub fn neighbor(self, dir: u32) -> Site {
        let unit = 1u64 << (FIELD_BITS * (dir >> 1));
        if dir & 1 == 0 {
            Site(self.0 + unit)
        } else {
            Site(self.0 - unit)
        }
    }

    pub fn norm2(self) -> i64 {
        (0..3).map(|a| self.coord(a) as i64).map(|c| c * c).sum()
    }

    pub fn is_adjacent(self, other: Site) -> bool {
        let d2: i64 = (0..3)
            .map(|a| self.coord(a) as i64 - other.coord(a) as i64)
            .map(|d| d * d)
            .sum();
        d2 == 1
    }
}

/// Open Euclidean ball `{ z : |z - center| < radius }`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    center: LatticePoint,
    radius: f64,
    exit_norm2: i64,
}

impl Ball {
    pub fn new(center: LatticePoint, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || radius >= MAX_COORD as f64 {
            return Err(LabError::InvalidRadius(radius));
        }
        Ok(Self {
            center,
            radius,
            // Relative slack so radii like sqrt(2) put their own lattice points outside.
            exit_norm2: (radius * radius * (1.0 - 1e-12)).ceil() as i64,
        })
    }

    pub fn centered(dim: Dim, radius: f64) -> Result<Self> {
        Self::new(LatticePoint::origin(dim), radius)
    }

    pub fn center(&self) -> LatticePoint {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> Dim {
        self.center.dim
    }

    /// Smallest integer squared distance that lies outside the ball.
    #[inline]
    pub fn exit_norm2(&self) -> i64 {
        self.exit_norm2
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        p.dist2(&self.center) < self.exit_norm2
    }

    pub fn contains_site(&self, s: Site) -> bool {
        self.contains(&s.point(self.dim()))
    }
}

/// A nearest-neighbour path stored as packed sites.
#[derive(Clone, PartialEq, Eq)]
pub struct LatticePath {
    sites: Vec<Site>,
    dim: Dim,
}

impl LatticePath {
    pub fn from_points(points: &[LatticePoint]) -> Result<Self> {
        let first = points.first().ok_or(LabError::EmptyPath)?;
        let dim = first.dim;
        for w in points.windows(2) {
            if w[1].dim != dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim.get(),
                    found: w[1].dim.get(),
                });
            }
            if !w[0].is_adjacent(&w[1]) {
                return Err(LabError::NonAdjacentStep {
                    from: w[0].coords().to_vec(),
                    to: w[1].coords().to_vec(),
                });
            }
        }
        Ok(Self {
            sites: points.iter().map(LatticePoint::site).collect(),
            dim,
        })
    }

    /// Builds a path from coordinate tuples, e.g. `&[[0, 0], [1, 0]]`.
    pub fn from_coords<const D: usize>(coords: &[[i32; D]]) -> Result<Self> {
        let points = coords
            .iter()
            .map(|c| LatticePoint::new(c))
            .collect::<Result<Vec<_>>>()?;
        Self::from_points(&points)
    }

    pub(crate) fn from_sites_unchecked(sites: Vec<Site>, dim: Dim) -> Self {
        debug_assert!(!sites.is_empty());
        Self { sites, dim }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<Site> {
        self.sites
    }

    /// Number of steps, one less than the number of points.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.sites.len() == 1
    }

    pub fn point(&self, i: usize) -> LatticePoint {
        self.sites[i].point(self.dim)
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        self.sites.iter().map(move |s| s.point(self.dim))
    }

    pub fn first(&self) -> LatticePoint {
        self.point(0)
    }

    pub fn last(&self) -> LatticePoint {
        self.point(self.sites.len() - 1)
    }

    pub fn has_unit_steps(&self) -> bool {
        self.sites.windows(2).all(|w| w[0].is_adjacent(w[1]))
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.sites.len());
        self.sites.iter().all(|s| seen.insert(*s))
    }
}

impl fmt::Debug for LatticePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.points()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip_and_neighbors() {
        let p = LatticePoint::new(&[-5, 17, MAX_COORD as i32]).unwrap();
        assert_eq!(p.site().point(Dim::Three), p);
        let s = LatticePoint::origin(Dim::Three).site();
        for dir in 0..6 {
            let q = s.neighbor(dir).point(Dim::Three);
            assert_eq!(q.norm2(), 1);
            assert_eq!(q.coords()[(dir / 2) as usize], if dir % 2 == 0 { 1 } else { -1 });
        }
        assert_ne!(s.0, 0);
    }

    #[test]
    fn ball_is_strict() {
        let b = Ball::centered(Dim::Two, 2.0).unwrap();
        assert!(b.contains(&LatticePoint::new(&[1, 1]).unwrap()));
        assert!(!b.contains(&LatticePoint::new(&[2, 0]).unwrap()));
        let b = Ball::centered(Dim::Two, 1.5).unwrap();
        assert!(b.contains(&LatticePoint::new(&[1, 1]).unwrap()));
        assert!(!b.contains(&LatticePoint::new(&[2, 0]).unwrap()));
        let b = Ball::centered(Dim::Two, 2f64.sqrt()).unwrap();
        assert!(!b.contains(&LatticePoint::new(&[1, 1]).unwrap()));
        assert!(Ball::centered(Dim::Two, 0.0).is_err());
    }

    #[test]
    fn path_requires_unit_steps() {
        assert!(LatticePath::from_coords(&[[0, 0], [1, 0], [1, 1]]).is_ok());
        assert!(matches!(
            LatticePath::from_coords(&[[0, 0], [1, 1]]),
            Err(LabError::NonAdjacentStep { .. })
        ));
        assert!(matches!(
            LatticePath::from_coords::<2>(&[]),
            Err(LabError::EmptyPath)
        ));
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(LatticePoint::new(&[1 << 21, 0]).is_err());
        assert!(LatticePoint::new(&[1, 2, 3, 4]).is_err());
    }
}
