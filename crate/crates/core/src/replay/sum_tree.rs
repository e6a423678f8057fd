use crate::error::{MepError, Result};

/// Complete binary tree of partial sums over a power-of-two number of leaves.
///
/// Stored as a 1-based heap: node `i` has children `2i` and `2i + 1`, the
/// root is node 1 and leaf `k` lives at `capacity + k`.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// Tree with at least `min_leaves` leaves, all zero.
    pub fn new(min_leaves: usize) -> Self {
        let capacity = min_leaves.max(1).next_power_of_two();
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.nodes[self.capacity + index]
    }

    /// Sets a leaf and recomputes every ancestor from its children.
    pub fn update(&mut self, index: usize, priority: f64) -> Result<()> {
        if index >= self.capacity {
            return Err(MepError::InvalidArgument(format!(
                "leaf {index} out of range for {} leaves",
                self.capacity
            )));
        }
        if !(priority >= 0.0) || !priority.is_finite() {
            return Err(MepError::InvalidArgument(format!(
                "priority must be finite and non-negative, got {priority}"
            )));
        }
        let mut i = self.capacity + index;
        self.nodes[i] = priority;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
        Ok(())
    }

    /// Leaf whose cumulative bin `[prefix, prefix + priority)` contains
    /// `value`. Values at or past the total land on the last non-empty leaf.
    pub fn find_prefix(&self, mut value: f64) -> usize {
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            let right = self.nodes[2 * i + 1];
            if value < left || right <= 0.0 {
                i *= 2;
            } else {
                value -= left;
                i = 2 * i + 1;
            }
        }
        i - self.capacity
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..]
    }

    /// Whether every internal node equals the sum of its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.capacity).all(|i| self.nodes[i] == self.nodes[2 * i] + self.nodes[2 * i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf() {
        let mut t = SumTree::new(1);
        t.update(0, 5.0).unwrap();
        assert_eq!(t.total(), 5.0);
    }

    #[test]
    fn four_leaves() {
        let mut t = SumTree::new(4);
        for (i, p) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            t.update(i, p).unwrap();
        }
        assert_eq!(t.total(), 10.0);
        // Bins [0,1) [1,3) [3,6) [6,10).
        assert_eq!(t.find_prefix(2.5), 1);
        assert_eq!(t.find_prefix(0.0), 0);
        assert_eq!(t.find_prefix(0.999), 0);
        assert_eq!(t.find_prefix(1.0), 1);
        assert_eq!(t.find_prefix(3.0), 2);
        assert_eq!(t.find_prefix(6.0), 3);
        assert_eq!(t.find_prefix(9.999), 3);
        t.update(1, 0.0).unwrap();
        assert_eq!(t.total(), 8.0);
        assert!(t.is_consistent());
    }

    #[test]
    fn zero_leaves_are_never_selected() {
        let mut t = SumTree::new(8);
        t.update(2, 1.0).unwrap();
        t.update(5, 1.0).unwrap();
        for v in [0.0, 0.5, 0.99, 1.0, 1.5, 1.999, 2.0, 7.0] {
            let i = t.find_prefix(v);
            assert!(i == 2 || i == 5, "value {v} -> leaf {i}");
        }
    }

    #[test]
    fn rejects_bad_updates() {
        let mut t = SumTree::new(3);
        assert_eq!(t.capacity(), 4);
        assert!(t.update(4, 1.0).is_err());
        assert!(t.update(0, -1.0).is_err());
        assert!(t.update(0, f64::NAN).is_err());
    }
}
