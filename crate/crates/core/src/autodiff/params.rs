use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// A named slice of a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamView {
    pub name: String,
    pub range: Range<usize>,
}

/// Flat parameter vector with named views, so that certificate and
/// controller parameters can share one optimiser.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore<T = f64> {
    pub values: Vec<T>,
    views: Vec<ParamView>,
}

impl<T: Clone> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            views: Vec::new(),
        }
    }

    /// Appends a block and returns its range.
    pub fn push_block(&mut self, name: &str, data: &[T]) -> Range<usize> {
        let start = self.values.len();
        self.values.extend_from_slice(data);
        let range = start..self.values.len();
        self.views.push(ParamView {
            name: name.to_string(),
            range: range.clone(),
        });
        range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn views(&self) -> &[ParamView] {
        &self.views
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        self.views
            .iter()
            .find(|v| v.name == name)
            .map(|v| v.range.clone())
            .ok_or_else(|| Error::Config(format!("no parameter block named {name}")))
    }

    pub fn view(&self, name: &str) -> Result<&[T]> {
        Ok(&self.values[self.range(name)?])
    }

    pub fn view_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let r = self.range(name)?;
        Ok(&mut self.values[r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_contiguous() {
        let mut s = ParamStore::new();
        let a = s.push_block("cert", &[1.0, 2.0, 3.0]);
        let b = s.push_block("ctrl", &[4.0]);
        assert_eq!(a, 0..3);
        assert_eq!(b, 3..4);
        assert_eq!(s.view("ctrl").unwrap(), &[4.0]);
        s.view_mut("cert").unwrap()[0] = 9.0;
        assert_eq!(s.values, vec![9.0, 2.0, 3.0, 4.0]);
        assert!(s.view("other").is_err());
    }
}
