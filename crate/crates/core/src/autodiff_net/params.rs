//! Flat parameter storage with a named slice table.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{Error, Result};

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Builds a contiguous layout by appending slices in order.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    slices: Vec<ParamSlice>,
    total: usize,
}

impl LayoutBuilder {
    /// Append a slice and return its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.total;
        let slice = ParamSlice {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        };
        self.total += slice.len();
        self.slices.push(slice);
        offset
    }

    pub fn finish(self) -> Vec<ParamSlice> {
        self.slices
    }
}

/// Check that slices are disjoint, ordered and cover `0..total` exactly.
pub fn validate_layout(layout: &[ParamSlice], total: usize) -> Result<()> {
    let mut cursor = 0;
    for s in layout {
        if s.offset != cursor {
            return Err(Error::format(format!(
                "slice '{}' starts at {} but previous slice ends at {cursor}",
                s.name, s.offset
            )));
        }
        cursor += s.len();
    }
    if cursor != total {
        return Err(Error::format(format!(
            "layout covers {cursor} values but the store holds {total}"
        )));
    }
    Ok(())
}

/// Network parameters. Every mutable borrow bumps the generation so that
/// forward caches taken earlier are detected as stale.
#[derive(Debug, Clone)]
pub struct ParamStore<T = f32> {
    values: Vec<T>,
    layout: Vec<ParamSlice>,
    generation: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn zeros(layout: Vec<ParamSlice>) -> Self {
        let total = layout.iter().map(|s| s.len()).sum();
        Self {
            values: vec![T::zero(); total],
            layout,
            generation: fresh_generation(),
        }
    }

    pub fn from_parts(layout: Vec<ParamSlice>, values: Vec<T>) -> Result<Self> {
        validate_layout(&layout, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter values".into()));
        }
        Ok(Self {
            values,
            layout,
            generation: fresh_generation(),
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        self.generation = fresh_generation();
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamSlice] {
        &self.layout
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&ParamSlice> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[T]> {
        self.find(name).map(|s| &self.values[s.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.find(name)?.range();
        Some(&mut self.values_mut()[r])
    }

    /// Name of the slice containing flat index `i`.
    pub fn owner(&self, i: usize) -> Option<&str> {
        self.layout
            .iter()
            .find(|s| s.range().contains(&i))
            .map(|s| s.name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        validate_layout(&self.layout, self.values.len())?;
        if let Some(s) = self
            .layout
            .iter()
            .find(|s| self.values[s.range()].iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite(format!("parameter slice '{}'", s.name)));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            layout: self.layout.clone(),
            generation: fresh_generation(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Vec<ParamSlice> {
        let mut b = LayoutBuilder::default();
        b.push("a.w", &[2, 3]);
        b.push("a.b", &[2]);
        b.push("c", &[4]);
        b.finish()
    }

    #[test]
    fn slices_cover_the_vector() {
        let p = ParamStore::<f32>::zeros(layout());
        assert_eq!(p.len(), 12);
        p.validate().unwrap();
        assert_eq!(p.find("c").unwrap().offset, 8);
        assert_eq!(p.owner(7), Some("a.b"));
    }

    #[test]
    fn gap_in_layout_rejected() {
        let mut l = layout();
        l[2].offset = 9;
        assert!(ParamStore::from_parts(l, vec![0f32; 13]).is_err());
        assert!(ParamStore::from_parts(layout(), vec![0f32; 11]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut v = vec![0f32; 12];
        v[3] = f32::NAN;
        assert!(ParamStore::from_parts(layout(), v).is_err());
    }

    #[test]
    fn mutation_bumps_generation() {
        let mut p = ParamStore::<f32>::zeros(layout());
        let g = p.generation();
        p.values_mut()[0] = 1.0;
        assert_ne!(p.generation(), g);
        assert_ne!(p.clone().cast::<f32>().generation(), p.generation());
    }
}
