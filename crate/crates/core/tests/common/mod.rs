#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Exhaustive search for a perfect matching of the N slots into pairs
/// `(c, c + beta mod N)`. Returns one such set of pairs if any exists.
pub fn brute_force_packing(n: usize, beta: usize) -> Option<Vec<(usize, usize)>> {
    fn go(used: &mut [bool], beta: usize, pairs: &mut Vec<(usize, usize)>) -> bool {
        let n = used.len();
        let Some(s) = used.iter().position(|u| !u) else {
            return true;
        };
        // s as a client, then s as a server
        for (c, t) in [(s, (s + beta) % n), ((s + n - beta) % n, s)] {
            let other = if c == s { t } else { c };
            if other == s || used[other] {
                continue;
            }
            used[s] = true;
            used[other] = true;
            pairs.push((c, t));
            if go(used, beta, pairs) {
                return true;
            }
            pairs.pop();
            used[s] = false;
            used[other] = false;
        }
        false
    }
    if n == 0 || beta == 0 || beta >= n {
        return None;
    }
    let mut used = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    go(&mut used, beta, &mut pairs).then_some(pairs)
}

pub fn jitnet_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_jitnet"))
}

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn jitnet(args: &[&str], output_root: &Path) -> Output {
    Command::new(jitnet_bin())
        .args(args)
        .env("JITNET_OUTPUT_ROOT", output_root)
        .output()
        .expect("jitnet binary runs")
}
