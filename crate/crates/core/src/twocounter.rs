//! Two-counter machines and their encoding into SHSs.
//!
//! A counter holding `n` is stored in four clocks `u1..u4` as
//! `1/2^(n+1) < u2 - u1 < u4 - u3 < 1/2^n`. Counter C uses `x1..x4`, counter D
//! uses `y1..y4`, and `z1..z4` are scratch clocks. Incrementing or
//! decrementing first writes the new value into the scratch clocks by racing
//! fast clocks against slow ones, then copies it back.

use crate::linsets::{LinAtom, LinSet, Rel};
use crate::rational::{int, ratio, Rat};
use crate::shs::{
    Assign, Block, DelaySpec, Edge, InitPart, InitShape, Location, ResetSpec, Shs, State, StrongKind, Target,
};
use num_traits::{One, Zero};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Counter {
    C,
    D,
}

impl Counter {
    fn base(self) -> usize {
        match self {
            Counter::C => 0,
            Counter::D => 4,
        }
    }
}

impl fmt::Display for Counter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Counter::C => "C",
            Counter::D => "D",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Instr {
    Inc { counter: Counter, next: usize },
    Dec { counter: Counter, next: usize },
    JumpIfZero { counter: Counter, then: usize, otherwise: usize },
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Machine {
    pub instrs: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("the machine must end with its only `halt`")]
    Halt,
    #[error("instruction {index} jumps to {target}, past the end")]
    Target { index: usize, target: usize },
}

impl Machine {
    /// One instruction per line: `inc C 3`, `dec D 0`, `jz C 2 5`, `halt`.
    pub fn parse(text: &str) -> Result<Self, MachineError> {
        let mut instrs = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| MachineError::Syntax { line: ln + 1, message };
            let words: Vec<&str> = line.split_whitespace().collect();
            let counter = |w: Option<&&str>| match w.copied() {
                Some("C") | Some("c") => Ok(Counter::C),
                Some("D") | Some("d") => Ok(Counter::D),
                other => Err(err(format!("expected counter C or D, found {other:?}"))),
            };
            let target = |w: Option<&&str>| {
                w.and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err("expected an instruction index".into()))
            };
            let (instr, arity) = match words[0] {
                "inc" => (
                    Instr::Inc {
                        counter: counter(words.get(1))?,
                        next: target(words.get(2))?,
                    },
                    3,
                ),
                "dec" => (
                    Instr::Dec {
                        counter: counter(words.get(1))?,
                        next: target(words.get(2))?,
                    },
                    3,
                ),
                "jz" => (
                    Instr::JumpIfZero {
                        counter: counter(words.get(1))?,
                        then: target(words.get(2))?,
                        otherwise: target(words.get(3))?,
                    },
                    4,
                ),
                "halt" => (Instr::Halt, 1),
                other => return Err(err(format!("unknown instruction `{other}`"))),
            };
            if words.len() != arity {
                return Err(err(format!("`{}` takes {} operands", words[0], arity - 1)));
            }
            instrs.push(instr);
        }
        let m = Machine { instrs };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), MachineError> {
        let halts: Vec<usize> = (0..self.instrs.len())
            .filter(|&i| self.instrs[i] == Instr::Halt)
            .collect();
        if halts != [self.instrs.len().wrapping_sub(1)] {
            return Err(MachineError::Halt);
        }
        for (index, ins) in self.instrs.iter().enumerate() {
            let targets: &[usize] = match ins {
                Instr::Inc { next, .. } | Instr::Dec { next, .. } => &[*next],
                Instr::JumpIfZero { then, otherwise, .. } => &[*then, *otherwise],
                Instr::Halt => &[],
            };
            if let Some(&target) = targets.iter().find(|&&t| t >= self.instrs.len()) {
                return Err(MachineError::Target { index, target });
            }
        }
        Ok(())
    }

    pub fn halt_index(&self) -> usize {
        self.instrs.len() - 1
    }
}

impl fmt::Display for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instrs {
            match ins {
                Instr::Inc { counter, next } => writeln!(f, "inc {counter} {next}")?,
                Instr::Dec { counter, next } => writeln!(f, "dec {counter} {next}")?,
                Instr::JumpIfZero {
                    counter,
                    then,
                    otherwise,
                } => writeln!(f, "jz {counter} {then} {otherwise}")?,
                Instr::Halt => writeln!(f, "halt")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Config {
    pub i: usize,
    pub c: u64,
    pub d: u64,
}

impl Config {
    pub fn value(&self, counter: Counter) -> u64 {
        match counter {
            Counter::C => self.c,
            Counter::D => self.d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MachineRun {
    Halted { trace: Vec<Config> },
    Running { trace: Vec<Config> },
}

impl MachineRun {
    pub fn trace(&self) -> &[Config] {
        match self {
            MachineRun::Halted { trace } | MachineRun::Running { trace } => trace,
        }
    }

    pub fn halted(&self) -> bool {
        matches!(self, MachineRun::Halted { .. })
    }
}

fn step_config(m: &Machine, cfg: Config) -> Config {
    let set = |cfg: Config, counter: Counter, v: u64| match counter {
        Counter::C => Config { c: v, ..cfg },
        Counter::D => Config { d: v, ..cfg },
    };
    match m.instrs[cfg.i] {
        Instr::Inc { counter, next } => Config {
            i: next,
            ..set(cfg, counter, cfg.value(counter) + 1)
        },
        Instr::Dec { counter, next } => Config {
            i: next,
            ..set(cfg, counter, cfg.value(counter).saturating_sub(1))
        },
        Instr::JumpIfZero {
            counter,
            then,
            otherwise,
        } => Config {
            i: if cfg.value(counter) == 0 { then } else { otherwise },
            ..cfg
        },
        Instr::Halt => cfg,
    }
}

/// Runs from `(0, 0, 0)` for at most `max_steps` instructions.
pub fn run_2cm(m: &Machine, max_steps: usize) -> MachineRun {
    let mut cfg = Config { i: 0, c: 0, d: 0 };
    let mut trace = vec![cfg];
    for _ in 0..max_steps {
        if m.instrs[cfg.i] == Instr::Halt {
            return MachineRun::Halted { trace };
        }
        cfg = step_config(m, cfg);
        trace.push(cfg);
    }
    if m.instrs[cfg.i] == Instr::Halt {
        MachineRun::Halted { trace }
    } else {
        MachineRun::Running { trace }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Identity resets everywhere; not cycle-reset.
    Faithful,
    /// Edges closing a cycle and the halting loop become strong resets to the
    /// initial valuation, which restores both counters to 0.
    CycleReset,
}

/// An encoded machine together with the location of each instruction.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub shs: Shs,
    /// Starred location of every instruction.
    pub starred: Vec<usize>,
    pub halt: usize,
}

const N: usize = 12;
const Z: usize = 8;
const VARS: [&str; N] = ["x1", "x2", "x3", "x4", "y1", "y2", "y3", "y4", "z1", "z2", "z3", "z4"];

fn lin(terms: &[(usize, i64)], constant: Rat, rel: Rel) -> LinAtom {
    let mut c = vec![Rat::zero(); N];
    for &(v, k) in terms {
        c[v] += int(k);
    }
    LinAtom::new(c, constant, rel)
}

fn conj(atoms: Vec<LinAtom>) -> LinSet {
    LinSet::from_atoms(N, atoms)
}

/// `u3 ≤ u4`
fn third_below_fourth(b: usize) -> LinAtom {
    lin(&[(b + 2, 1), (b + 3, -1)], Rat::zero(), Rel::Le)
}

/// `u2 - u1 ≤ u4 - u3`
fn gaps_ordered(b: usize) -> LinAtom {
    lin(&[(b + 1, 1), (b, -1), (b + 3, -1), (b + 2, 1)], Rat::zero(), Rel::Le)
}

/// `u1 ≥ u2`
fn first_overtook(b: usize) -> LinAtom {
    lin(&[(b + 1, 1), (b, -1)], Rat::zero(), Rel::Le)
}

/// `u2 - u1 ≥ 1/2`, the zero test.
fn is_zero(b: usize) -> LinSet {
    conj(vec![lin(&[(b, 1), (b + 1, -1)], ratio(1, 2), Rel::Le)])
}

fn is_nonzero(b: usize) -> LinSet {
    conj(vec![lin(&[(b + 1, 1), (b, -1)], -ratio(1, 2), Rel::Le)])
}

fn ones() -> Vec<Rat> {
    vec![Rat::one(); N]
}

fn set_zero(vars: &[usize]) -> ResetSpec {
    let mut a = vec![Assign::Keep; N];
    for &v in vars {
        a[v] = Assign::Set(Rat::zero());
    }
    ResetSpec::Assign(a)
}

pub fn initial_valuation() -> Vec<Rat> {
    let enc = [int(0), ratio(5, 8), int(0), ratio(7, 8)];
    enc.iter().chain(enc.iter()).cloned().chain((0..4).map(|_| Rat::zero())).collect()
}

fn restart() -> ResetSpec {
    let v = initial_valuation();
    ResetSpec::Strong {
        support: LinSet::from_box(&v.iter().map(|x| (x.clone(), x.clone())).collect::<Vec<_>>()),
        kind: StrongKind::UniformDiscrete,
        bbox: v.iter().map(|x| (x.clone(), x.clone())).collect(),
    }
}

/// Which instruction a gadget implements.
struct Gadget {
    index: usize,
    base: usize,
    increment: bool,
}

struct Builder {
    locations: Vec<Location>,
    edges: Vec<Edge>,
}

impl Builder {
    fn loc(&mut self, name: String, rates: Vec<Rat>, invariant: LinSet, delay: DelaySpec) -> usize {
        self.locations.push(Location {
            name,
            rates,
            invariant,
            delay,
        });
        self.locations.len() - 1
    }

    fn edge(&mut self, name: String, src: usize, dst: usize, guard: LinSet, reset: ResetSpec) {
        self.edges.push(Edge {
            name,
            src,
            dst,
            guard,
            reset,
        });
    }

    /// Writes the counter at `b`, shifted by the gadget rates, into the
    /// scratch clocks and copies it back, ending at `next`.
    fn arithmetic(&mut self, g: Gadget, star: usize, entry_guard: LinSet, next: usize, closing: bool) {
        let Gadget { index: i, base: b, increment } = g;
        let (fast, scratch) = if increment { (int(3), int(1)) } else { (int(2), int(2)) };
        let mut race = ones();
        race[b] = fast.clone();
        race[b + 2] = fast;
        for r in race.iter_mut().skip(Z) {
            *r = scratch.clone();
        }
        let mut copy = ones();
        copy[Z] = int(2);
        copy[Z + 2] = int(2);
        let auto = DelaySpec::Auto;
        let a = self.loc(
            format!("L{i}_a"),
            race.clone(),
            conj(vec![third_below_fourth(b), gaps_ordered(b)]),
            auto.clone(),
        );
        let bl = self.loc(format!("L{i}_b"), race, conj(vec![third_below_fourth(b)]), auto.clone());
        let mid = self.loc(format!("L{i}_m"), ones(), LinSet::full(N), DelaySpec::Exp(Rat::one()));
        let c = self.loc(
            format!("L{i}_c"),
            copy.clone(),
            conj(vec![third_below_fourth(Z), gaps_ordered(Z)]),
            auto.clone(),
        );
        let d = self.loc(format!("L{i}_d"), copy, conj(vec![third_below_fourth(Z)]), auto);
        self.edge(format!("i{i}_enter"), star, a, entry_guard, set_zero(&[Z + 1, Z + 3]));
        self.edge(
            format!("i{i}_race"),
            a,
            bl,
            conj(vec![first_overtook(b), third_below_fourth(b)]),
            set_zero(&[Z]),
        );
        self.edge(format!("i{i}_mark"), bl, mid, LinSet::full(N), set_zero(&[Z + 2]));
        self.edge(format!("i{i}_copy"), mid, c, LinSet::full(N), set_zero(&[b + 1, b + 3]));
        self.edge(
            format!("i{i}_back"),
            c,
            d,
            conj(vec![first_overtook(Z), third_below_fourth(Z)]),
            set_zero(&[b]),
        );
        let reset = if closing { restart() } else { set_zero(&[b + 2]) };
        self.edge(format!("i{i}_done"), d, next, LinSet::full(N), reset);
    }
}

/// Number of locations each instruction kind contributes.
pub fn gadget_size(ins: &Instr) -> usize {
    match ins {
        Instr::Inc { .. } | Instr::Dec { .. } => 6,
        Instr::JumpIfZero { .. } | Instr::Halt => 1,
    }
}

pub fn encode(m: &Machine, variant: Variant) -> Encoded {
    let mut b = Builder {
        locations: Vec::new(),
        edges: Vec::new(),
    };
    let starred: Vec<usize> = (0..m.instrs.len())
        .map(|i| b.loc(format!("L{i}"), ones(), LinSet::full(N), DelaySpec::Exp(Rat::one())))
        .collect();
    let closing = |from: usize, to: usize| variant == Variant::CycleReset && to <= from;
    let plain = || ResetSpec::identity(N);
    for (i, ins) in m.instrs.iter().enumerate() {
        match *ins {
            Instr::Inc { counter, next } => {
                let g = Gadget {
                    index: i,
                    base: counter.base(),
                    increment: true,
                };
                b.arithmetic(g, starred[i], LinSet::full(N), starred[next], closing(i, next));
            }
            Instr::Dec { counter, next } => {
                let base = counter.base();
                let reset = if closing(i, next) { restart() } else { plain() };
                b.edge(format!("i{i}_zero"), starred[i], starred[next], is_zero(base), reset);
                let g = Gadget {
                    index: i,
                    base,
                    increment: false,
                };
                b.arithmetic(g, starred[i], is_nonzero(base), starred[next], closing(i, next));
            }
            Instr::JumpIfZero {
                counter,
                then,
                otherwise,
            } => {
                let base = counter.base();
                let r = |t| if closing(i, t) { restart() } else { plain() };
                b.edge(format!("i{i}_zero"), starred[i], starred[then], is_zero(base), r(then));
                b.edge(format!("i{i}_nonzero"), starred[i], starred[otherwise], is_nonzero(base), r(otherwise));
            }
            Instr::Halt => {
                let reset = if variant == Variant::CycleReset { restart() } else { plain() };
                b.edge("halt".into(), starred[i], starred[i], LinSet::full(N), reset);
            }
        }
    }
    let halt = starred[m.halt_index()];
    let shs = Shs {
        vars: VARS.iter().map(|s| s.to_string()).collect(),
        locations: b.locations,
        edges: b.edges,
        init: vec![InitPart {
            location: starred[0],
            weight: Rat::one(),
            shape: InitShape::Point(initial_valuation()),
        }],
        targets: vec![Target {
            name: "halt".into(),
            blocks: vec![Block {
                location: halt,
                region: LinSet::full(N),
            }],
        }],
    };
    Encoded { shs, starred, halt }
}

/// Expected starred-location visits, derived from an interpreter run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodingTrace {
    /// `(starred location, c, d)` in visit order, ending at the first halt
    /// visit for halting machines.
    pub visits: Vec<(usize, u64, u64)>,
    /// Steps of the encoded SHS needed to reach the halting location.
    pub steps_to_halt: Option<usize>,
}

impl EncodingTrace {
    pub fn new(m: &Machine, enc: &Encoded, run: &MachineRun) -> Self {
        let visits = run.trace().iter().map(|c| (enc.starred[c.i], c.c, c.d)).collect();
        let steps_to_halt = run.halted().then(|| {
            run.trace()
                .windows(2)
                .map(|w| {
                    let cfg = w[0];
                    match m.instrs[cfg.i] {
                        Instr::Inc { .. } => 6,
                        Instr::Dec { counter, .. } if cfg.value(counter) > 0 => 6,
                        _ => 1,
                    }
                })
                .sum()
        });
        Self { visits, steps_to_halt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// The run entered a starred location other than the expected one.
    Order { visit: usize, expected: usize, found: usize },
    /// A counter's clock differences left the window for its value.
    Window {
        visit: usize,
        counter: Counter,
        value: u64,
        low_gap: f64,
        high_gap: f64,
    },
}

/// Checks every starred visit of `prefix` against `trace`, with slack on the
/// window inequalities. Visits past the end of the trace are ignored.
pub fn check_encoding(enc: &Encoded, prefix: &[State], trace: &EncodingTrace, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut k = 0;
    for s in prefix {
        if !enc.starred.contains(&s.location) {
            continue;
        }
        let Some(&(expected, c, d)) = trace.visits.get(k) else {
            break;
        };
        if s.location != expected {
            out.push(Violation::Order {
                visit: k,
                expected,
                found: s.location,
            });
            break;
        }
        for (counter, value) in [(Counter::C, c), (Counter::D, d)] {
            let b = counter.base();
            let v = &s.valuation;
            let low_gap = v[b + 1] - v[b];
            let high_gap = v[b + 3] - v[b + 2];
            let lo = 0.5f64.powi(value as i32 + 1);
            let hi = 0.5f64.powi(value as i32);
            if !(lo - slack < low_gap && low_gap < high_gap + slack && high_gap < hi + slack) {
                out.push(Violation::Window {
                    visit: k,
                    counter,
                    value,
                    low_gap,
                    high_gap,
                });
            }
        }
        k += 1;
        if s.location == enc.halt {
            break;
        }
    }
    out
}

/// Small machines used by tests and benchmarks: `(name, source, halts)`.
pub const MACHINES: [(&str, &str, bool); 6] = [
    ("inc_halt", "inc C 1\nhalt\n", true),
    ("inc_inc_halt", "inc C 1\ninc C 2\nhalt\n", true),
    ("count_down", "inc C 1\ninc C 2\ndec C 3\njz C 4 2\nhalt\n", true),
    ("mixed", "inc C 1\ninc D 2\ndec C 3\nhalt\n", true),
    ("spin", "jz C 0 0\nhalt\n", false),
    ("grow", "inc C 1\njz D 0 2\nhalt\n", false),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shs::CycleCheck;
    use crate::sts::run_rng;

    /// Straight-line reference interpreter.
    fn reference(src: &str, fuel: usize) -> (bool, (usize, u64, u64)) {
        let prog: Vec<Vec<&str>> = src.lines().map(|l| l.split_whitespace().collect()).collect();
        let (mut i, mut r) = (0usize, [0u64; 2]);
        for _ in 0..fuel {
            let w = &prog[i];
            let k = usize::from(w.get(1) == Some(&"D"));
            match w[0] {
                "halt" => return (true, (i, r[0], r[1])),
                "inc" => { r[k] += 1; i = w[2].parse().unwrap() }
                "dec" => { r[k] = r[k].saturating_sub(1); i = w[2].parse().unwrap() }
                _ => i = if r[k] == 0 { w[2].parse().unwrap() } else { w[3].parse().unwrap() },
            }
        }
        (false, (i, r[0], r[1]))
    }

    #[test]
    fn parse_and_print() {
        for (name, src, _) in MACHINES {
            let m = Machine::parse(src).unwrap();
            assert_eq!(m.to_string(), src, "{name}");
        }
        assert!(matches!(Machine::parse("halt\ninc C 0\n"), Err(MachineError::Halt)));
        assert!(matches!(Machine::parse("inc C 7\nhalt\n"), Err(MachineError::Target { .. })));
        assert!(matches!(Machine::parse("inc X 1\nhalt\n"), Err(MachineError::Syntax { line: 1, .. })));
    }

    #[test]
    fn interpreter_matches_reference() {
        let m = Machine::parse("inc C 1\nhalt\n").unwrap();
        let run = run_2cm(&m, 10);
        assert!(run.halted());
        assert_eq!(*run.trace().last().unwrap(), Config { i: 1, c: 1, d: 0 });
        let m = Machine::parse("jz C 0 0\nhalt\n").unwrap();
        assert!(!run_2cm(&m, 50).halted());
        for (name, src, halts) in MACHINES {
            let m = Machine::parse(src).unwrap();
            let run = run_2cm(&m, 200);
            let (h, (i, c, d)) = reference(src, 200);
            assert_eq!(run.halted(), halts, "{name}");
            assert_eq!(h, halts);
            let last = run.trace().last().unwrap();
            if halts {
                assert_eq!((last.i, last.c, last.d), (i, c, d), "{name}");
            }
        }
        let m = Machine::parse("inc C 1\ninc D 2\ndec C 3\nhalt\n").unwrap();
        assert_eq!(*run_2cm(&m, 10).trace().last().unwrap(), Config { i: 3, c: 0, d: 1 });
    }

    #[test]
    fn encodings_validate_and_have_expected_shape() {
        for (name, src, _) in MACHINES {
            let m = Machine::parse(src).unwrap();
            let enc = encode(&m, Variant::Faithful);
            assert_eq!(enc.shs.validate(), vec![], "{name}");
            let expected: usize = m.instrs.iter().map(gadget_size).sum();
            assert_eq!(enc.shs.locations.len(), expected);
            assert!(matches!(enc.shs.cycle_reset_check(), CycleCheck::Witness(_)));
            let cr = encode(&m, Variant::CycleReset);
            assert_eq!(cr.shs.validate(), vec![], "{name}");
            assert_eq!(cr.shs.cycle_reset_check(), CycleCheck::Ok, "{name}");
        }
    }

    #[test]
    fn gadget_location_counts() {
        let m = Machine::parse("inc C 1\ndec D 2\njz C 3 3\nhalt\n").unwrap();
        let enc = encode(&m, Variant::Faithful);
        assert_eq!(enc.shs.locations.len(), 6 + 6 + 1 + 1);
        assert_eq!(enc.shs.edges.len(), 6 + 7 + 2 + 1);
    }

    fn simulate_machine(src: &str, variant: Variant, runs: u64, tweak: impl Fn(&mut Shs)) -> (usize, usize) {
        let m = Machine::parse(src).unwrap();
        let mut enc = encode(&m, variant);
        tweak(&mut enc.shs);
        let run = run_2cm(&m, 100);
        let trace = EncodingTrace::new(&m, &enc, &run);
        let horizon = trace.steps_to_halt.unwrap_or(60);
        let sampler = enc.shs.sampler();
        let (mut reached, mut violations) = (0, 0);
        for seed in 0..runs {
            let mut rng = run_rng(7, seed);
            let prefix = sampler.run(horizon, &mut rng).unwrap();
            if prefix.iter().any(|s| s.location == enc.halt) {
                reached += 1;
            }
            violations += check_encoding(&enc, &prefix, &trace, 1e-9).len();
        }
        (reached, violations)
    }

    #[test]
    fn encoded_runs_follow_the_interpreter() {
        assert_eq!(simulate_machine("inc C 1\ninc C 2\nhalt\n", Variant::Faithful, 200, |_| {}), (200, 0));
        assert_eq!(
            simulate_machine("inc C 1\ninc C 2\ndec C 3\njz C 4 2\nhalt\n", Variant::Faithful, 200, |_| {}),
            (200, 0)
        );
        assert_eq!(simulate_machine("inc C 1\njz D 0 2\nhalt\n", Variant::Faithful, 200, |_| {}).0, 0);
    }

    #[test]
    fn corrupted_slope_is_detected() {
        let (_, violations) = simulate_machine("inc C 1\ninc C 2\nhalt\n", Variant::Faithful, 50, |m| {
            let a = m.location_index("L0_a").unwrap();
            m.locations[a].rates[0] = int(2);
            m.locations[a].rates[2] = int(2);
        });
        assert!(violations > 0);
    }

    #[test]
    fn cycle_reset_verdicts_track_halting() {
        use crate::reachability::{qual_reach, Verdict};
        for (src, expected) in [("inc C 1\nhalt\n", Verdict::AlmostSure), ("jz C 0 0\nhalt\n", Verdict::Never)] {
            let enc = encode(&Machine::parse(src).unwrap(), Variant::CycleReset);
            let target = enc.shs.targets[0].blocks.clone();
            let report = qual_reach(&enc.shs, &target, 200).unwrap();
            assert_eq!(report.verdict, expected, "{src}");
        }
    }
}
