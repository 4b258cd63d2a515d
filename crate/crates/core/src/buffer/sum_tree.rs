use crate::Real;

/// Binary tree of partial sums over a fixed number of nonnegative leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    base: usize,
    nodes: Vec<Real>,
}

impl SumTree {
    pub fn new(leaves: usize) -> Self {
        let base = leaves.max(1).next_power_of_two();
        Self {
            leaves,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn total(&self) -> Real {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> Real {
        self.nodes[self.base + i]
    }

    pub fn set(&mut self, i: usize, value: Real) {
        assert!(i < self.leaves, "leaf {i} out of range");
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut n = self.base + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range `[prefix, prefix + value)` contains `mass`.
    ///
    /// Masses at or beyond the total fall to the last positive leaf.
    pub fn find(&self, mut mass: Real) -> usize {
        let mut n = 1;
        while n < self.base {
            let left = self.nodes[2 * n];
            if mass < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        let mut i = n - self.base;
        while i > 0 && self.get(i) <= 0.0 {
            i -= 1;
        }
        i
    }

    /// Largest absolute gap between an internal node and the sum of its children.
    pub fn consistency_error(&self) -> Real {
        (1..self.base)
            .map(|n| (self.nodes[n] - self.nodes[2 * n] - self.nodes[2 * n + 1]).abs())
            .fold(0.0, Real::max)
    }
}
