use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sphgrid::{make_grid, FeatureMap};

/// The six faces of a sky box, named by the axis they look along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    /// `+x`
    Front,
    /// `-x`
    Back,
    /// `+y`
    Left,
    /// `-y`
    Right,
    /// `+z`
    Up,
    /// `-z`
    Down,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::Front, Face::Back, Face::Left, Face::Right, Face::Up, Face::Down];

    pub fn name(self) -> &'static str {
        match self {
            Face::Front => "front",
            Face::Back => "back",
            Face::Left => "left",
            Face::Right => "right",
            Face::Up => "up",
            Face::Down => "down",
        }
    }

    fn index(self) -> usize {
        Face::ALL.iter().position(|f| *f == self).expect("listed")
    }
}

/// `(forward, image right, image down)` unit vectors of a face.
pub fn face_basis(face: Face) -> ([f64; 3], [f64; 3], [f64; 3]) {
    match face {
        Face::Front => ([1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]),
        Face::Back => ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]),
        Face::Left => ([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
        Face::Right => ([0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
        Face::Up => ([0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]),
        Face::Down => ([0.0, 0.0, -1.0], [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0]),
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Face hit by direction `v` and the gnomonic image coordinates `(u, w)` in `[-1, 1]`,
/// `u` growing to the right and `w` downwards.
pub fn locate(v: [f64; 3]) -> (Face, f64, f64) {
    let axis = (0..3)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .expect("three axes");
    let face = match (axis, v[axis] >= 0.0) {
        (0, true) => Face::Front,
        (0, false) => Face::Back,
        (1, true) => Face::Left,
        (1, false) => Face::Right,
        (_, true) => Face::Up,
        (_, false) => Face::Down,
    };
    let (f, r, d) = face_basis(face);
    let depth = dot(v, f);
    (face, dot(v, r) / depth, dot(v, d) / depth)
}

/// Six square 8-bit RGB images, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeFaceSet {
    size: usize,
    faces: Vec<Vec<u8>>,
}

impl CubeFaceSet {
    /// Accepts faces in any order; each face must appear once with `size * size * 3` bytes.
    pub fn new(size: usize, faces: Vec<(Face, Vec<u8>)>) -> Result<Self> {
        if size == 0 {
            return Err(Error::ShapeMismatch("cube faces must be at least 1x1".into()));
        }
        let mut slots: Vec<Option<Vec<u8>>> = vec![None; 6];
        for (face, px) in faces {
            if px.len() != size * size * 3 {
                return Err(Error::ShapeMismatch(format!(
                    "face {} has {} bytes, expected {}x{}x3",
                    face.name(),
                    px.len(),
                    size,
                    size
                )));
            }
            if slots[face.index()].replace(px).is_some() {
                return Err(Error::Domain(format!("face {} given twice", face.name())));
            }
        }
        let mut out = Vec::with_capacity(6);
        for (slot, face) in slots.into_iter().zip(Face::ALL) {
            out.push(slot.ok_or_else(|| Error::Domain(format!("missing cube face {}", face.name())))?);
        }
        Ok(CubeFaceSet { size, faces: out })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn face(&self, face: Face) -> &[u8] {
        &self.faces[face.index()]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at integers),
    /// clamped to the face.
    fn sample(&self, face: Face, x: f64, y: f64, ch: usize) -> f64 {
        let px = self.face(face);
        let s = self.size;
        let max = (s - 1) as f64;
        let (x, y) = (x.clamp(0.0, max), y.clamp(0.0, max));
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(s - 1), (y0 + 1).min(s - 1));
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let at = |i: usize, j: usize| px[(j * s + i) * 3 + ch] as f64;
        let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
        let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Projects a sky box onto the grid of bandlimit `b`, channels scaled to `[0, 1]`.
pub fn cubemap_to_sphere(faces: &CubeFaceSet, b: usize) -> Result<FeatureMap> {
    let grid = make_grid(b)?;
    let n = grid.len();
    let s = faces.size as f64;
    let mut values = vec![0.0; 3 * n];
    for (i, v) in grid.directions().enumerate() {
        let (face, u, w) = locate(v);
        let x = (u + 1.0) * 0.5 * s - 0.5;
        let y = (w + 1.0) * 0.5 * s - 0.5;
        for ch in 0..3 {
            values[ch * n + i] = faces.sample(face, x, y, ch) / 255.0;
        }
    }
    FeatureMap::new(Arc::clone(&grid), 3, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(size: usize, rgb: [u8; 3]) -> Vec<u8> {
        rgb.iter().copied().cycle().take(size * size * 3).collect()
    }

    #[test]
    fn gray_faces_give_constant_sphere() {
        let faces = CubeFaceSet::new(4, Face::ALL.iter().map(|f| (*f, solid(4, [128; 3]))).collect()).unwrap();
        let map = cubemap_to_sphere(&faces, 8).unwrap();
        assert!(map.values().iter().all(|v| (v - 128.0 / 255.0).abs() < 1e-12));
    }

    #[test]
    fn up_direction_hits_up_face_center() {
        let (face, u, w) = locate([0.0, 0.0, 1.0]);
        assert_eq!(face, Face::Up);
        assert_eq!((u, w), (0.0, 0.0));
        for f in Face::ALL {
            let (fwd, r, d) = face_basis(f);
            assert_eq!(locate(fwd), (f, 0.0, 0.0));
            // right-handed screen: right x down = forward
            let cross = [
                r[1] * d[2] - r[2] * d[1],
                r[2] * d[0] - r[0] * d[2],
                r[0] * d[1] - r[1] * d[0],
            ];
            assert_eq!(cross, fwd, "{f:?}");
        }
    }

    #[test]
    fn missing_and_mismatched_faces() {
        let five: Vec<_> = Face::ALL[..5].iter().map(|f| (*f, solid(2, [0; 3]))).collect();
        assert!(matches!(CubeFaceSet::new(2, five), Err(Error::Domain(_))));
        let mut six: Vec<_> = Face::ALL.iter().map(|f| (*f, solid(2, [0; 3]))).collect();
        six[3].1 = solid(3, [0; 3]);
        assert!(matches!(CubeFaceSet::new(2, six), Err(Error::ShapeMismatch(_))));
    }
}
