use std::fmt;

use crate::error::{Error, Result};

/// A rooted `k`-level tree in which every vertex of generation `j - 1` has
/// `M_j` children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSpec {
    volumes: Vec<u64>,
    // counts[j] = M_1 * .. * M_j, counts[0] = 1.
    counts: Vec<u64>,
}

/// Builds a tree from its volumes `M_1..M_k`.
///
/// The number of vertices at every generation must fit in a `u64`.
pub fn make_tree(volumes: &[u64]) -> Result<TreeSpec> {
    if volumes.is_empty() {
        return Err(Error::InvalidSpec("a tree needs at least one level".into()));
    }
    if let Some(j) = volumes.iter().position(|&m| m == 0) {
        return Err(Error::InvalidSpec(format!("volume of level {} is zero", j + 1)));
    }
    let mut counts = Vec::with_capacity(volumes.len() + 1);
    counts.push(1u64);
    for &m in volumes {
        let next = counts.last().unwrap().checked_mul(m).ok_or(Error::Overflow)?;
        counts.push(next);
    }
    Ok(TreeSpec {
        volumes: volumes.to_vec(),
        counts,
    })
}

impl TreeSpec {
    pub fn levels(&self) -> usize {
        self.volumes.len()
    }

    pub fn volumes(&self) -> &[u64] {
        &self.volumes
    }

    /// `M_j`, 1-based.
    pub fn volume(&self, level: usize) -> u64 {
        self.volumes[level - 1]
    }

    /// Number of vertices in generation `level` (1 for the root).
    pub fn count(&self, level: usize) -> u64 {
        self.counts[level]
    }

    pub fn leaf_count(&self) -> u64 {
        self.counts[self.levels()]
    }

    pub fn contains(&self, addr: &Address) -> bool {
        addr.level() <= self.levels()
            && addr
                .coords()
                .iter()
                .zip(&self.volumes)
                .all(|(&x, &m)| (1..=m).contains(&x))
    }

    pub fn check(&self, addr: &Address) -> Result<()> {
        if self.contains(addr) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{addr} is not a vertex of the tree")))
        }
    }

    pub fn check_leaf(&self, addr: &Address) -> Result<()> {
        self.check(addr)?;
        if addr.level() != self.levels() {
            return Err(Error::Domain(format!("{addr} is not a leaf")));
        }
        Ok(())
    }

    /// Position of `addr` among the vertices of its generation, in
    /// lexicographic order.
    pub fn index_of(&self, addr: &Address) -> Result<u64> {
        self.check(addr)?;
        Ok(self.index_unchecked(addr.coords()))
    }

    pub(crate) fn index_unchecked(&self, coords: &[u64]) -> u64 {
        coords
            .iter()
            .zip(&self.volumes)
            .fold(0u64, |acc, (&x, &m)| acc * m + (x - 1))
    }

    /// Inverse of [`TreeSpec::index_of`].
    pub fn address_of(&self, level: usize, mut index: u64) -> Address {
        let mut coords = vec![0; level];
        for j in (0..level).rev() {
            let m = self.volumes[j];
            coords[j] = index % m + 1;
            index /= m;
        }
        Address(coords)
    }

    /// All vertices of generation `level`, lexicographically.
    pub fn addresses(&self, level: usize) -> impl Iterator<Item = Address> + '_ {
        (0..self.count(level)).map(move |i| self.address_of(level, i))
    }
}

/// A vertex `x|_j = x_1 .. x_j`; the empty path is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub Vec<u64>);

impl Address {
    pub fn root() -> Self {
        Address(Vec::new())
    }

    pub fn new(path: impl Into<Vec<u64>>) -> Self {
        Address(path.into())
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[u64] {
        &self.0
    }

    pub fn prefix(&self, level: usize) -> Address {
        Address(self.0[..level].to_vec())
    }

    pub fn parent(&self) -> Option<Address> {
        (!self.0.is_empty()).then(|| self.prefix(self.0.len() - 1))
    }

    pub fn child(&self, label: u64) -> Address {
        let mut v = self.0.clone();
        v.push(label);
        Address(v)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_examples() {
        let t = make_tree(&[3, 3, 2]).unwrap();
        assert_eq!((t.levels(), t.leaf_count()), (3, 18));
        let t = make_tree(&[1]).unwrap();
        assert_eq!((t.levels(), t.leaf_count()), (1, 1));
        let t = make_tree(&[2, 2, 2, 2]).unwrap();
        assert_eq!((t.levels(), t.leaf_count()), (4, 16));
    }

    #[test]
    fn invalid_trees() {
        assert!(matches!(make_tree(&[]), Err(Error::InvalidSpec(_))));
        assert!(matches!(make_tree(&[2, 0]), Err(Error::InvalidSpec(_))));
        assert_eq!(make_tree(&[u64::MAX, 2]), Err(Error::Overflow));
    }

    #[test]
    fn index_round_trip() {
        let t = make_tree(&[3, 3, 2]).unwrap();
        for level in 0..=3 {
            for (i, a) in t.addresses(level).enumerate() {
                assert_eq!(t.index_of(&a).unwrap(), i as u64);
            }
        }
        assert_eq!(t.address_of(3, 17), Address::new([3, 3, 2]));
        assert!(t.index_of(&Address::new([4])).is_err());
    }

    #[test]
    fn leaf_checks() {
        let t = make_tree(&[2, 2]).unwrap();
        assert!(t.check_leaf(&Address::new([1, 2])).is_ok());
        assert!(t.check_leaf(&Address::new([1])).is_err());
        assert!(t.check_leaf(&Address::new([1, 3])).is_err());
    }
}
