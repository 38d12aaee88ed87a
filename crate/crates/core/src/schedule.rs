//! Control maps of an almost-cyclic cycle.
//!
//! A schedule is a finite word `s(1), …, s(w′)` over the set indices
//! `1..=m` that mentions every set at least once. The prefix convention
//! `s(i − m) = i` for `i ∈ [1, m]` makes the "most recent visit" map
//! `π(j, i)` total, and `p(j) = π(j − 1, s(j))` names the step whose dual
//! vector is handed back when set `s(j)` is projected again.
//!
//! All indices here follow that convention: steps live in `[1 − m, w′]`
//! and sets in `[1, m]`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Schedule {
    m: usize,
    /// `word[j - 1] = s(j)` for `j ∈ [1, w′]`.
    word: Vec<usize>,
}

impl Schedule {
    /// `w′ = m`, `s(j) = j`.
    pub fn cyclic(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::contract("schedule needs at least one set"));
        }
        Ok(Schedule {
            m,
            word: (1..=m).collect(),
        })
    }

    /// An explicit word `s(1), …, s(w′)` with entries in `1..=m`.
    pub fn from_word(m: usize, word: Vec<usize>) -> Result<Self> {
        let sched = Schedule { m, word };
        sched.validate()?;
        Ok(sched)
    }

    /// A seeded permutation of `1..=m` padded with `w′ − m` uniform picks,
    /// then shuffled.
    pub fn random_covering(m: usize, w_prime: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::contract("schedule needs at least one set"));
        }
        if w_prime < m {
            return Err(Error::contract(format!(
                "cycle length {w_prime} is shorter than the set count {m}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut word: Vec<usize> = (1..=m).collect();
        for _ in m..w_prime {
            word.push(rng.random_range(1..=m));
        }
        word.shuffle(&mut rng);
        Ok(Schedule { m, word })
    }

    /// Checks the range of every entry and that each set is visited.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::contract("schedule needs at least one set"));
        }
        if let Some(&bad) = self.word.iter().find(|&&i| i == 0 || i > self.m) {
            return Err(Error::contract(format!("set index {bad} outside 1..={}", self.m)));
        }
        let mut seen = alloc::vec![false; self.m];
        for &i in &self.word {
            seen[i - 1] = true;
        }
        if let Some(i) = seen.iter().position(|&v| !v) {
            return Err(Error::contract(format!("set {} is never visited in the cycle", i + 1)));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn w_prime(&self) -> usize {
        self.word.len()
    }

    pub fn word(&self) -> &[usize] {
        &self.word
    }

    /// `s(j)` for `j ∈ [1 − m, w′]`.
    pub fn s(&self, j: isize) -> Result<usize> {
        let m = self.m as isize;
        if j <= 0 && j > -m {
            Ok((j + m) as usize)
        } else if j >= 1 && j <= self.w_prime() as isize {
            Ok(self.word[j as usize - 1])
        } else {
            Err(Error::contract(format!(
                "step {j} outside [{}, {}]",
                1 - m,
                self.w_prime()
            )))
        }
    }

    /// `π(j, i) = max{j′ ≤ j : s(j′) = i}` for `j ∈ [0, w′]`.
    pub fn pi(&self, j: isize, i: usize) -> Result<isize> {
        if i == 0 || i > self.m {
            return Err(Error::contract(format!("set index {i} outside 1..={}", self.m)));
        }
        if j < 0 || j > self.w_prime() as isize {
            return Err(Error::contract(format!("step {j} outside [0, {}]", self.w_prime())));
        }
        let last = self.word[..j as usize].iter().rposition(|&v| v == i);
        Ok(match last {
            Some(pos) => pos as isize + 1,
            None => i as isize - self.m as isize,
        })
    }

    /// `p(j) = π(j − 1, s(j))` for `j ∈ [1, w′]`.
    pub fn p(&self, j: isize) -> Result<isize> {
        if j < 1 || j > self.w_prime() as isize {
            return Err(Error::contract(format!("step {j} outside [1, {}]", self.w_prime())));
        }
        self.pi(j - 1, self.s(j)?)
    }

    /// Parses `cyclic`, `random:<seed>[:<w′>]` or a comma list such as `1,2,1,3`.
    pub fn parse(spec: &str, m: usize) -> Result<Self> {
        let spec = spec.trim();
        if spec == "cyclic" {
            return Schedule::cyclic(m);
        }
        if let Some(rest) = spec.strip_prefix("random:") {
            let mut parts = rest.split(':');
            let seed = parse_num::<u64>(parts.next().unwrap_or(""), "seed")?;
            let w_prime = match parts.next() {
                Some(w) => parse_num::<usize>(w, "cycle length")?,
                None => m,
            };
            if parts.next().is_some() {
                return Err(Error::contract(format!("malformed schedule `{spec}`")));
            }
            return Schedule::random_covering(m, w_prime, seed);
        }
        let word = spec
            .split(',')
            .map(|t| parse_num::<usize>(t, "set index"))
            .collect::<Result<Vec<_>>>()?;
        Schedule::from_word(m, word)
    }
}

fn parse_num<T: FromStr>(text: &str, what: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::contract(format!("bad {what} `{text}` in schedule")))
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.word.iter().map(|i| format!("{i}")).collect();
        f.write_str(&parts.join(","))
    }
}
