use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::NocError;

/// Complete `arity`-ary tree of routers with cores as leaves.
///
/// Routers are numbered breadth-first from the root (id 0), so the children of
/// router `r` are `arity*r + 1 ..= arity*r + arity`. The routers of the last
/// level each serve `arity` consecutive cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HTreeTopology {
    pub arity: usize,
    pub depth: usize,
    pub n_cores: usize,
}

/// Where a router's output goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    Router { id: usize, port: usize },
    Coprocessor,
}

impl HTreeTopology {
    pub fn n_routers(&self) -> usize {
        (self.n_cores - 1) / (self.arity - 1)
    }

    /// First router id on `level` (root level is 0).
    pub fn level_start(&self, level: usize) -> usize {
        (self.arity.pow(level as u32) - 1) / (self.arity - 1)
    }

    pub fn level(&self, router: usize) -> usize {
        let mut l = 0;
        while self.level_start(l + 1) <= router {
            l += 1;
        }
        l
    }

    pub fn parent(&self, router: usize) -> Upstream {
        if router == 0 {
            Upstream::Coprocessor
        } else {
            Upstream::Router {
                id: (router - 1) / self.arity,
                port: (router - 1) % self.arity,
            }
        }
    }

    /// Child routers; empty for the last level, whose children are cores.
    pub fn child_routers(&self, router: usize) -> Range<usize> {
        let first = self.arity * router + 1;
        if first >= self.n_routers() {
            0..0
        } else {
            first..first + self.arity
        }
    }

    /// Router a core attaches to, and the port it uses.
    pub fn core_parent(&self, core: usize) -> (usize, usize) {
        (self.level_start(self.depth - 1) + core / self.arity, core % self.arity)
    }

    /// Cores below `router`.
    pub fn core_range(&self, router: usize) -> Range<usize> {
        let level = self.level(router);
        let span = self.arity.pow((self.depth - level) as u32);
        let i = router - self.level_start(level);
        i * span..(i + 1) * span
    }

    /// Routers from a core up to the root, nearest first. Always `depth` long.
    pub fn path_to_root(&self, core: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth);
        let (mut r, _) = self.core_parent(core);
        loop {
            path.push(r);
            match self.parent(r) {
                Upstream::Router { id, .. } => r = id,
                Upstream::Coprocessor => return path,
            }
        }
    }
}

pub fn build_htree(n_cores: usize, arity: usize) -> Result<HTreeTopology, NocError> {
    let shape = NocError::Shape { n_cores, arity };
    if arity < 2 || n_cores < arity {
        return Err(shape);
    }
    let mut n = n_cores;
    let mut depth = 0;
    while n > 1 {
        if n % arity != 0 {
            return Err(shape);
        }
        n /= arity;
        depth += 1;
    }
    Ok(HTreeTopology {
        arity,
        depth,
        n_cores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chip() {
        let t = build_htree(4096, 4).unwrap();
        assert_eq!((t.n_routers(), t.depth), (1365, 6));
    }

    #[test]
    fn single_level() {
        let t = build_htree(4, 4).unwrap();
        assert_eq!((t.n_routers(), t.depth), (1, 1));
        assert_eq!(t.core_parent(3), (0, 3));
    }

    #[test]
    fn non_power_rejected() {
        assert!(matches!(build_htree(10, 4), Err(NocError::Shape { .. })));
        assert!(build_htree(1, 4).is_err());
        assert!(build_htree(8, 4).is_err());
    }

    #[test]
    fn adjacency_is_consistent() {
        let t = build_htree(256, 4).unwrap();
        for r in 0..t.n_routers() {
            for c in t.child_routers(r) {
                assert_eq!(t.parent(c), Upstream::Router { id: r, port: (c - 1) % 4 });
                let cr = t.core_range(c);
                assert!(t.core_range(r).start <= cr.start && cr.end <= t.core_range(r).end);
            }
        }
        for core in 0..256 {
            let path = t.path_to_root(core);
            assert_eq!(path.len(), t.depth);
            assert_eq!(*path.last().unwrap(), 0);
            for r in path {
                assert!(t.core_range(r).contains(&core));
            }
        }
        assert_eq!(t.core_range(0), 0..256);
    }
}
