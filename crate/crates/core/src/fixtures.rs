//! Models used by tests, benchmarks and the CLI examples.

use crate::dsl::parse_model;
use crate::shs::Shs;
use std::fmt::Write as _;

pub const PACMAN: &str = include_str!("../fixtures/pacman.shs");
pub const SINGLE_LOOP: &str = include_str!("../fixtures/single_loop.shs");
pub const COIN: &str = include_str!("../fixtures/coin.shs");
pub const COIN3: &str = include_str!("../fixtures/coin3.shs");
pub const ALL_STRONG: &str = include_str!("../fixtures/all_strong.shs");
pub const RETRY: &str = include_str!("../fixtures/retry.shs");
pub const SINK: &str = include_str!("../fixtures/sink.shs");
pub const NO_FINITE_ABS: &str = include_str!("../fixtures/no_finite_abs.shs");
pub const STRONG_LOOP: &str = include_str!("../fixtures/strong_loop.shs");

pub const CORPUS: [(&str, &str); 9] = [
    ("pacman", PACMAN),
    ("single_loop", SINGLE_LOOP),
    ("coin", COIN),
    ("coin3", COIN3),
    ("all_strong", ALL_STRONG),
    ("retry", RETRY),
    ("sink", SINK),
    ("no_finite_abs", NO_FINITE_ABS),
    ("strong_loop", STRONG_LOOP),
];

/// Hand-written cycle-reset models (the encoded two-counter machine is added
/// by callers that need it).
pub const CYCLE_RESET: [(&str, &str); 5] = [
    ("coin", COIN),
    ("coin3", COIN3),
    ("all_strong", ALL_STRONG),
    ("retry", RETRY),
    ("sink", SINK),
];

pub fn load(src: &str) -> Shs {
    parse_model(src).expect("fixture parses")
}

pub fn pacman() -> Shs {
    load(PACMAN)
}

pub fn single_loop() -> Shs {
    load(SINGLE_LOOP)
}

pub fn coin() -> Shs {
    load(COIN)
}

pub fn coin3() -> Shs {
    load(COIN3)
}

pub fn all_strong() -> Shs {
    load(ALL_STRONG)
}

pub fn retry() -> Shs {
    load(RETRY)
}

pub fn sink() -> Shs {
    load(SINK)
}

pub fn no_finite_abs() -> Shs {
    load(NO_FINITE_ABS)
}

pub fn strong_loop() -> Shs {
    load(STRONG_LOOP)
}

/// `c0 -> c1 -> … -> cn` with plain edges, closed by a strong edge back to `c0`.
pub fn chain(n: usize) -> Shs {
    let mut src = String::from("shs v1\nvars x\n");
    for i in 0..=n {
        let _ = writeln!(src, "loc c{i} {{ rate x = 1 ; inv {{ 0 <= x <= 1 }} }}");
    }
    for i in 0..n {
        let _ = writeln!(src, "edge s{i} : c{i} -> c{} {{ reset assign {{ x := 0 }} }}", i + 1);
    }
    let _ = writeln!(src, "edge back : c{n} -> c0 {{ reset strong discrete {{ x = 0 }} }}");
    src.push_str("init c0 { point (0) }\n");
    let _ = writeln!(src, "target last {{ loc c{n} }}");
    load(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_validates() {
        for (name, src) in CORPUS {
            let m = load(src);
            assert_eq!(m.validate(), vec![], "{name}");
        }
        assert_eq!(chain(3).validate(), vec![]);
    }
}
