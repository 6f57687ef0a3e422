//! Environment dumps.
//!
//! CSV: a header `level,address,gamma,p` and one row per vertex, `p` left
//! empty on the leaf level or when no coins are stored.
//!
//! Binary, little endian: the magic `KTRPENV\0`, version `u32 = 1`, `k` as
//! `u32`, the volumes as `u64`, then for every level and every vertex in
//! lexicographic order `gamma: f64, p: f64` with `p = NaN` when absent.

use super::build::GremEnv;
use crate::error::{Error, Result};
use crate::tree_env::{make_tree, Address, CoinModel, Environment, TreeSpec};

pub const MAGIC: &[u8; 8] = b"KTRPENV\0";
pub const VERSION: u32 = 1;
const CSV_HEADER: &str = "level,address,gamma,p";

/// A dense environment with optional coins.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDump {
    pub tree: TreeSpec,
    /// `gamma[j-1]` over generation `j`.
    pub gamma: Vec<Vec<f64>>,
    /// Empty, or `p_j` over generation `j` for `j < k`.
    pub coins: Vec<Vec<f64>>,
}

impl EnvDump {
    pub fn from_environment(env: &Environment) -> Result<Self> {
        env.require_dense()?;
        let k = env.tree().levels();
        Ok(EnvDump {
            tree: env.tree().clone(),
            gamma: (1..=k).map(|j| env.dense(j).unwrap().to_vec()).collect(),
            coins: Vec::new(),
        })
    }

    pub fn from_grem(g: &GremEnv) -> Result<Self> {
        let mut d = Self::from_environment(&g.env)?;
        d.coins = g.coins.clone();
        Ok(d)
    }

    pub fn to_environment(&self) -> Result<Environment> {
        Environment::new(self.tree.clone(), self.gamma.clone())
    }

    /// Stored coins when present, otherwise coins derived from `γ`.
    pub fn to_coin_model(&self) -> Result<CoinModel> {
        if self.coins.is_empty() {
            return CoinModel::from_environment(&self.to_environment()?);
        }
        let k = self.tree.levels();
        CoinModel::new(self.tree.clone(), self.gamma[k - 1].clone(), self.coins.clone())
    }

    fn check(&self) -> Result<()> {
        self.to_environment()?;
        let k = self.tree.levels();
        if !self.coins.is_empty() {
            if self.coins.len() != k - 1 {
                return Err(Error::Dimension {
                    expected: k - 1,
                    got: self.coins.len(),
                });
            }
            for (j0, level) in self.coins.iter().enumerate() {
                if level.len() as u64 != self.tree.count(j0 + 1) || level.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                    return Err(Error::Parse(format!("bad coins on level {}", j0 + 1)));
                }
            }
        }
        Ok(())
    }

    fn coin(&self, level: usize, index: usize) -> Option<f64> {
        self.coins.get(level - 1).map(|c| c[index])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (j0, level) in self.gamma.iter().enumerate() {
            let j = j0 + 1;
            for (i, g) in level.iter().enumerate() {
                let addr = self.tree.address_of(j, i as u64);
                let p = self.coin(j, i).map(|p| format!("{p:e}")).unwrap_or_default();
                out.push_str(&format!("{j},{addr},{g:e},{p}\n"));
            }
        }
        out
    }

    /// Rows may come in any order; every vertex must appear exactly once.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Parse(format!("expected header `{CSV_HEADER}`")));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = |what: &str| Error::Parse(format!("row {}: {what}", n + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [level, addr, gamma, p] = fields[..] else {
                return Err(bad("expected 4 fields"));
            };
            let level: usize = level.parse().map_err(|_| bad("level"))?;
            let coords = addr
                .split('.')
                .map(|c| c.parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("address"))?;
            if coords.len() != level || level == 0 {
                return Err(bad("address length differs from level"));
            }
            let gamma: f64 = gamma.parse().map_err(|_| bad("gamma"))?;
            let p: Option<f64> = if p.is_empty() {
                None
            } else {
                Some(p.parse().map_err(|_| bad("p"))?)
            };
            rows.push((Address(coords), gamma, p));
        }
        // Volumes are the largest label seen per level.
        let k = rows
            .iter()
            .map(|r| r.0.level())
            .max()
            .ok_or_else(|| Error::Parse("no rows".into()))?;
        let mut volumes = vec![0u64; k];
        for (addr, ..) in &rows {
            for (j, &x) in addr.coords().iter().enumerate() {
                volumes[j] = volumes[j].max(x);
            }
        }
        let tree = make_tree(&volumes)?;
        let total: u64 = (1..=k)
            .map(|j| tree.count(j))
            .try_fold(0u64, |a, c| a.checked_add(c))
            .ok_or(Error::Overflow)?;
        if total != rows.len() as u64 {
            return Err(Error::Parse(format!(
                "{} rows for a tree with {total} vertices",
                rows.len()
            )));
        }
        let mut gamma: Vec<Vec<f64>> = (1..=k).map(|j| vec![f64::NAN; tree.count(j) as usize]).collect();
        let mut coins: Vec<Vec<f64>> = (1..k).map(|j| vec![f64::NAN; tree.count(j) as usize]).collect();
        let mut seen: Vec<Vec<bool>> = (1..=k).map(|j| vec![false; tree.count(j) as usize]).collect();
        let mut with_coins = 0u64;
        for (addr, g, p) in rows {
            let j = addr.level();
            let i = tree.index_of(&addr)? as usize;
            if std::mem::replace(&mut seen[j - 1][i], true) {
                return Err(Error::Parse(format!("duplicate row for {addr}")));
            }
            gamma[j - 1][i] = g;
            match (p, j < k) {
                (Some(p), true) => {
                    coins[j - 1][i] = p;
                    with_coins += 1;
                }
                (Some(_), false) => return Err(Error::Parse("leaves carry no coin".into())),
                (None, _) => {}
            }
        }
        let upper: u64 = (1..k).map(|j| tree.count(j)).sum();
        let coins = match with_coins {
            0 => Vec::new(),
            c if c == upper => coins,
            _ => {
                return Err(Error::Parse(
                    "coins must be given for every inner vertex or none".into(),
                ))
            }
        };
        let d = EnvDump { tree, gamma, coins };
        d.check()?;
        Ok(d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let k = self.tree.levels();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        for &m in self.tree.volumes() {
            out.extend_from_slice(&m.to_le_bytes());
        }
        for (j0, level) in self.gamma.iter().enumerate() {
            for (i, g) in level.iter().enumerate() {
                out.extend_from_slice(&g.to_le_bytes());
                out.extend_from_slice(&self.coin(j0 + 1, i).unwrap_or(f64::NAN).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported version {version}")));
        }
        let k = r.u32()? as usize;
        if k == 0 || k > (bytes.len() - r.pos) / 8 {
            return Err(Error::Parse(format!("implausible level count {k}")));
        }
        let volumes = (0..k).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let tree = make_tree(&volumes)?;
        let vertices = (1..=k)
            .map(|j| tree.count(j))
            .try_fold(0u64, |a, c| a.checked_add(c))
            .ok_or(Error::Overflow)?;
        // Check the length before allocating anything sized by the header.
        if vertices.checked_mul(16) != Some((bytes.len() - r.pos) as u64) {
            return Err(Error::Parse("payload length does not match the volumes".into()));
        }
        let mut gamma = Vec::with_capacity(k);
        let mut coins = Vec::with_capacity(k - 1);
        let mut any_coin = false;
        let mut all_coins = true;
        for j in 1..=k {
            let n = tree.count(j) as usize;
            let mut g = Vec::with_capacity(n);
            let mut p = Vec::with_capacity(n);
            for _ in 0..n {
                g.push(r.f64()?);
                let c = r.f64()?;
                if j < k {
                    any_coin |= !c.is_nan();
                    all_coins &= !c.is_nan();
                } else if !c.is_nan() {
                    return Err(Error::Parse("leaves carry no coin".into()));
                }
                p.push(c);
            }
            gamma.push(g);
            if j < k {
                coins.push(p);
            }
        }
        let coins = match (any_coin, all_coins) {
            (false, _) => Vec::new(),
            (true, true) => coins,
            (true, false) => {
                return Err(Error::Parse(
                    "coins must be given for every inner vertex or none".into(),
                ))
            }
        };
        let d = EnvDump { tree, gamma, coins };
        d.check()?;
        Ok(d)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
