//! Tabular functions over `(control, action)` pairs.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::reduction::ControlValue;

pub type Cell = (ControlValue, usize);

/// A function stored as values on an ordered support, with a fallback for
/// unseen pairs. Unseen lookups are counted for diagnostics.
#[derive(Debug)]
pub struct TabularFn {
    support: Vec<Cell>,
    values: Vec<f64>,
    default_value: f64,
    unseen: AtomicUsize,
}

impl Clone for TabularFn {
    fn clone(&self) -> Self {
        Self {
            support: self.support.clone(),
            values: self.values.clone(),
            default_value: self.default_value,
            unseen: AtomicUsize::new(self.unseen.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for TabularFn {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support
            && self.values == other.values
            && self.default_value == other.default_value
    }
}

impl TabularFn {
    /// Builds from pairs; duplicates keep the last value.
    pub fn from_pairs<I: IntoIterator<Item = (Cell, f64)>>(pairs: I, default_value: f64) -> Self {
        let mut pairs: Vec<(Cell, f64)> = pairs.into_iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut support: Vec<Cell> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (cell, v) in pairs {
            if support.last() == Some(&cell) {
                *values.last_mut().expect("nonempty") = v;
            } else {
                support.push(cell);
                values.push(v);
            }
        }
        Self {
            support,
            values,
            default_value,
            unseen: AtomicUsize::new(0),
        }
    }

    /// The function equal to `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self::from_pairs(std::iter::empty(), value)
    }

    pub fn support(&self) -> &[Cell] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn contains(&self, x: ControlValue, a: usize) -> bool {
        self.support.binary_search(&(x, a)).is_ok()
    }

    pub fn get(&self, x: ControlValue, a: usize) -> f64 {
        match self.support.binary_search(&(x, a)) {
            Ok(i) => self.values[i],
            Err(_) => {
                if !self.support.is_empty() {
                    self.unseen.fetch_add(1, Ordering::Relaxed);
                }
                self.default_value
            }
        }
    }

    /// Number of lookups that fell back to the default on a non-constant function.
    pub fn unseen_lookups(&self) -> usize {
        self.unseen.load(Ordering::Relaxed)
    }

    /// Applies `f(cell, value)` to every stored value and to the default.
    pub fn map(&self, f: impl Fn(Option<&Cell>, f64) -> f64) -> Self {
        Self {
            support: self.support.clone(),
            values: self
                .support
                .iter()
                .zip(&self.values)
                .map(|(c, v)| f(Some(c), *v))
                .collect(),
            default_value: f(None, self.default_value),
            unseen: AtomicUsize::new(0),
        }
    }

    fn peek(&self, cell: &Cell) -> f64 {
        match self.support.binary_search(cell) {
            Ok(i) => self.values[i],
            Err(_) => self.default_value,
        }
    }

    /// Value without touching the unseen counter.
    pub fn value_at(&self, x: ControlValue, a: usize) -> f64 {
        self.peek(&(x, a))
    }
}

/// `max |f - g|` over the union of supports, without touching counters.
pub fn sup_distance(f: &TabularFn, g: &TabularFn) -> f64 {
    f.support()
        .iter()
        .chain(g.support())
        .map(|c| (f.peek(c) - g.peek(c)).abs())
        .fold(0.0, f64::max)
}

/// `max |f - g|` over the given cells.
pub fn sup_distance_on<'a, I: IntoIterator<Item = &'a Cell>>(f: &TabularFn, g: &TabularFn, cells: I) -> f64 {
    cells
        .into_iter()
        .map(|c| (f.peek(c) - g.peek(c)).abs())
        .fold(0.0, f64::max)
}
