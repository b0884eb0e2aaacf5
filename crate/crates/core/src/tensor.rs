//! Coordinate-component tensors at a point, as plain values or as jets.

use crate::jet::Jet;

/// Index position of one tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// Components of a tensor at a point, row-major over its slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub slots: Vec<Slot>,
    pub comps: Vec<f64>,
}

/// Jet-valued components: the tensor field expanded around a point.
#[derive(Clone, Debug)]
pub struct JetTensor {
    pub n: usize,
    pub slots: Vec<Slot>,
    pub comps: Vec<Jet>,
}

pub(crate) fn flat_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

pub(crate) fn multi_index(n: usize, rank: usize, mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
    idx
}

impl Tensor {
    pub fn zeros(n: usize, slots: Vec<Slot>) -> Tensor {
        let len = n.pow(slots.len() as u32);
        Tensor { n, slots, comps: vec![0.0; len] }
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[flat_index(self.n, idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let i = flat_index(self.n, idx);
        self.comps[i] = v;
    }

    /// Apply the row-major `n*n` matrix `m` to slot `s`: `T'[..a..] = m[a][b] T[..b..]`.
    pub fn map_slot(&self, s: usize, m: &[f64]) -> Tensor {
        let n = self.n;
        let rank = self.rank();
        let stride = n.pow((rank - 1 - s) as u32);
        let mut out = vec![0.0; self.comps.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let a = (flat / stride) % n;
            let base = flat - a * stride;
            *o = (0..n).map(|b| m[a * n + b] * self.comps[base + b * stride]).sum();
        }
        Tensor { n, slots: self.slots.clone(), comps: out }
    }

    /// Components in a frame: `frame` holds the frame vectors as columns,
    /// `coframe` is its inverse.
    pub fn in_frame(&self, frame: &[f64], coframe: &[f64]) -> Tensor {
        let n = self.n;
        // Down slots transform with E^T, up slots with E^{-1}.
        let mut et = vec![0.0; n * n];
        for a in 0..n {
            for i in 0..n {
                et[a * n + i] = frame[i * n + a];
            }
        }
        let mut t = self.clone();
        for s in 0..self.rank() {
            t = match self.slots[s] {
                Slot::Down => t.map_slot(s, &et),
                Slot::Up => t.map_slot(s, coframe),
            };
        }
        t
    }

    /// Pointwise norm induced by the metric `g` (row-major) and its inverse.
    pub fn norm_g(&self, g: &[f64], ginv: &[f64]) -> f64 {
        let mut dual = self.clone();
        for s in 0..self.rank() {
            dual = match self.slots[s] {
                Slot::Down => dual.map_slot(s, ginv),
                Slot::Up => dual.map_slot(s, g),
            };
        }
        let sq: f64 = self.comps.iter().zip(&dual.comps).map(|(a, b)| a * b).sum();
        sq.max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect();
        Tensor { n: self.n, slots: self.slots.clone(), comps }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect();
        Tensor { n: self.n, slots: self.slots.clone(), comps }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor { n: self.n, slots: self.slots.clone(), comps: self.comps.iter().map(|c| c * s).collect() }
    }

    /// Reorder slots: output slot `k` is input slot `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Tensor {
        let n = self.n;
        let rank = self.rank();
        let slots = perm.iter().map(|&p| self.slots[p]).collect();
        let mut out = vec![0.0; self.comps.len()];
        for (flat, o) in out.iter_mut().enumerate() {
            let idx = multi_index(n, rank, flat);
            let mut src = vec![0; rank];
            for k in 0..rank {
                src[perm[k]] = idx[k];
            }
            *o = self.comps[flat_index(n, &src)];
        }
        Tensor { n, slots, comps: out }
    }
}

impl JetTensor {
    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[flat_index(self.n, idx)]
    }

    pub fn order(&self) -> usize {
        self.comps.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn value(&self) -> Tensor {
        Tensor { n: self.n, slots: self.slots.clone(), comps: self.comps.iter().map(Jet::value).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(Jet::is_finite)
    }
}
