//! Jet-evaluable tensor fields on a chart.
//!
//! A field is a map from a point and a jet order to the jet expansion of its
//! coordinate components at that point. Explicit fields are closures over the
//! seeded coordinates; derived fields (the Ricci endomorphism, for instance)
//! run the curvature pipeline at a higher metric order internally.

use std::marker::PhantomData;
use std::sync::Arc;

use crate::error::{GeometryError, Result};
use crate::jet::Jet;
use crate::tensor::{JetTensor, Slot, Tensor};

pub type FieldFn = dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync;

/// Valence marker for [`Field`].
pub trait Kind: Send + Sync + 'static {
    const SLOTS: &'static [Slot];
}

#[derive(Debug)]
pub struct Vector;
#[derive(Debug)]
pub struct Covector;
#[derive(Debug)]
pub struct Endo;
#[derive(Debug)]
pub struct Bilinear;

impl Kind for Vector {
    const SLOTS: &'static [Slot] = &[Slot::Up];
}
impl Kind for Covector {
    const SLOTS: &'static [Slot] = &[Slot::Down];
}
impl Kind for Endo {
    const SLOTS: &'static [Slot] = &[Slot::Up, Slot::Down];
}
impl Kind for Bilinear {
    const SLOTS: &'static [Slot] = &[Slot::Down, Slot::Down];
}

pub struct Field<K: Kind> {
    n: usize,
    eval: Arc<FieldFn>,
    _kind: PhantomData<K>,
}

impl<K: Kind> Clone for Field<K> {
    fn clone(&self) -> Self {
        Field { n: self.n, eval: self.eval.clone(), _kind: PhantomData }
    }
}

impl<K: Kind> std::fmt::Debug for Field<K> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Field<{:?}>(n = {})", K::SLOTS, self.n)
    }
}

pub type VectorField = Field<Vector>;
pub type OneFormField = Field<Covector>;
pub type EndoField = Field<Endo>;
/// Covariant 2-tensor field; used for both symmetric forms and 2-forms.
pub type TwoFormField = Field<Bilinear>;

impl<K: Kind> Field<K> {
    pub fn components(n: usize) -> usize {
        n.pow(K::SLOTS.len() as u32)
    }

    /// Field given by an explicit formula in the coordinates.
    pub fn from_formula(n: usize, f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> Self {
        let expected = Self::components(n);
        let eval = move |x: &[f64], order: usize| -> Result<Vec<Jet>> {
            let seeds = Jet::seeds(x, order);
            let out = f(&seeds);
            if out.len() != expected {
                return Err(GeometryError::Dimension { expected, got: out.len() });
            }
            Ok(out)
        };
        Field { n, eval: Arc::new(eval), _kind: PhantomData }
    }

    /// Field backed by an arbitrary jet evaluator.
    pub fn from_jets(n: usize, f: impl Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync + 'static) -> Self {
        Field { n, eval: Arc::new(f), _kind: PhantomData }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Result<JetTensor> {
        if x.len() != self.n {
            return Err(GeometryError::Dimension { expected: self.n, got: x.len() });
        }
        let comps = (self.eval)(x, order)?;
        let t = JetTensor { n: self.n, slots: K::SLOTS.to_vec(), comps };
        if !t.is_finite() {
            return Err(GeometryError::NonFinite { what: "field component", point: x.to_vec() });
        }
        Ok(t)
    }

    pub fn value(&self, x: &[f64]) -> Result<Tensor> {
        Ok(self.jets(x, 0)?.value())
    }

    /// Type-erased view for valence-generic routines.
    pub fn to_tensor_field(&self) -> TensorField {
        TensorField { n: self.n, slots: K::SLOTS.to_vec(), eval: self.eval.clone() }
    }

    /// Pointwise scaling by a constant.
    pub fn scaled(&self, s: f64) -> Self {
        let inner = self.eval.clone();
        Field::from_jets(self.n, move |x, order| Ok(inner(x, order)?.into_iter().map(|j| j * s).collect()))
    }
}

/// A field of arbitrary valence.
#[derive(Clone)]
pub struct TensorField {
    pub n: usize,
    pub slots: Vec<Slot>,
    eval: Arc<FieldFn>,
}

impl TensorField {
    pub fn new(
        n: usize,
        slots: Vec<Slot>,
        f: impl Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync + 'static,
    ) -> Self {
        TensorField { n, slots, eval: Arc::new(f) }
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Result<JetTensor> {
        let comps = (self.eval)(x, order)?;
        let expected = self.n.pow(self.slots.len() as u32);
        if comps.len() != expected {
            return Err(GeometryError::Dimension { expected, got: comps.len() });
        }
        Ok(JetTensor { n: self.n, slots: self.slots.clone(), comps })
    }
}

impl VectorField {
    /// The coordinate field `∂_k`.
    pub fn coordinate(n: usize, k: usize) -> VectorField {
        VectorField::from_formula(n, move |x| (0..n).map(|i| x[0].lift(if i == k { 1.0 } else { 0.0 })).collect())
    }
}

impl EndoField {
    /// `s · Id`.
    pub fn identity(n: usize, s: f64) -> EndoField {
        EndoField::from_formula(n, move |x| {
            (0..n * n).map(|k| x[0].lift(if k / n == k % n { s } else { 0.0 })).collect()
        })
    }
}
