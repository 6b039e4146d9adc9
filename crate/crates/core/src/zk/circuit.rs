//! Arithmetic circuits over the Goldilocks field.

use std::collections::HashMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::field::Fe;
use super::ZkError;

pub type Wire = u32;

/// Witness-only computations. They drive a wire without constraining it;
/// the surrounding gadget adds the constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hint {
    /// Remainder of floor(signed(x) / 2^shift).
    FloorRem { shift: u32 },
    /// 1 if signed(x) ≥ 0.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gate {
    Const { out: Wire, value: Fe },
    Add { a: Wire, b: Wire, out: Wire },
    Mul { a: Wire, b: Wire, out: Wire },
    /// w·(w − 1) = 0
    Bool { w: Wire },
    /// canonical value of w < 2^bits
    Range { w: Wire, bits: u32 },
    Hint { hint: Hint, input: Wire, out: Wire },
    AssertEq { a: Wire, b: Wire },
}

impl Gate {
    fn driven(&self) -> Option<Wire> {
        match self {
            Gate::Const { out, .. }
            | Gate::Add { out, .. }
            | Gate::Mul { out, .. }
            | Gate::Hint { out, .. } => Some(*out),
            _ => None,
        }
    }

    fn reads(&self) -> Vec<Wire> {
        match self {
            Gate::Const { .. } => vec![],
            Gate::Add { a, b, .. } | Gate::Mul { a, b, .. } | Gate::AssertEq { a, b } => vec![*a, *b],
            Gate::Bool { w } | Gate::Range { w, .. } => vec![*w],
            Gate::Hint { input, .. } => vec![*input],
        }
    }

    fn map(&self, f: &impl Fn(Wire) -> Wire) -> Gate {
        match *self {
            Gate::Const { out, value } => Gate::Const { out: f(out), value },
            Gate::Add { a, b, out } => Gate::Add { a: f(a), b: f(b), out: f(out) },
            Gate::Mul { a, b, out } => Gate::Mul { a: f(a), b: f(b), out: f(out) },
            Gate::Bool { w } => Gate::Bool { w: f(w) },
            Gate::Range { w, bits } => Gate::Range { w: f(w), bits },
            Gate::Hint { hint, input, out } => Gate::Hint { hint, input: f(input), out: f(out) },
            Gate::AssertEq { a, b } => Gate::AssertEq { a: f(a), b: f(b) },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GateCounts {
    pub constant: usize,
    pub add: usize,
    pub mul: usize,
    pub boolean: usize,
    pub range: usize,
    pub hint: usize,
    pub assert_eq: usize,
    pub total: usize,
    pub wires: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Circuit {
    pub n_wires: u32,
    pub gates: Vec<Gate>,
    pub public: Vec<Wire>,
    pub private: Vec<Wire>,
    /// Inputs bound to another circuit's outputs by [`compose`].
    pub ports: Vec<Wire>,
    pub outputs: Vec<Wire>,
}

impl Circuit {
    pub fn is_empty(&self) -> bool {
        self.n_wires == 0 && self.gates.is_empty()
    }

    pub fn counts(&self) -> GateCounts {
        let mut c = GateCounts {
            total: self.gates.len(),
            wires: self.n_wires as usize,
            ..GateCounts::default()
        };
        for g in &self.gates {
            match g {
                Gate::Const { .. } => c.constant += 1,
                Gate::Add { .. } => c.add += 1,
                Gate::Mul { .. } => c.mul += 1,
                Gate::Bool { .. } => c.boolean += 1,
                Gate::Range { .. } => c.range += 1,
                Gate::Hint { .. } => c.hint += 1,
                Gate::AssertEq { .. } => c.assert_eq += 1,
            }
        }
        c
    }

    /// Every wire driven exactly once (inputs count as drivers) and read
    /// only after it is driven.
    pub fn validate(&self) -> Result<(), ZkError> {
        let mut driven = vec![false; self.n_wires as usize];
        let mut drive = |w: Wire| -> Result<(), ZkError> {
            let slot = driven
                .get_mut(w as usize)
                .ok_or_else(|| ZkError::Malformed(format!("wire {w} out of range")))?;
            if *slot {
                return Err(ZkError::Malformed(format!("wire {w} driven twice")));
            }
            *slot = true;
            Ok(())
        };
        for w in self.public.iter().chain(&self.private).chain(&self.ports) {
            drive(*w)?;
        }
        let mut order = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            if let Some(w) = g.driven() {
                drive(w)?;
            }
            order.push(g);
        }
        let mut ready = vec![false; self.n_wires as usize];
        for w in self.public.iter().chain(&self.private).chain(&self.ports) {
            ready[*w as usize] = true;
        }
        for (i, g) in order.iter().enumerate() {
            if let Some(w) = g.reads().into_iter().find(|w| !ready[*w as usize]) {
                return Err(ZkError::Malformed(format!("gate {i} reads wire {w} before it is driven")));
            }
            if let Some(w) = g.driven() {
                ready[w as usize] = true;
            }
        }
        if let Some(w) = self.outputs.iter().find(|w| !ready[**w as usize]) {
            return Err(ZkError::Malformed(format!("output wire {w} is never driven")));
        }
        Ok(())
    }

    /// Witness generation: runs every driving gate in order. Constraints
    /// are not checked.
    pub fn evaluate(&self, public: &[Fe], private: &[Fe], ports: &[Fe]) -> Result<Vec<Fe>, ZkError> {
        self.evaluate_forced(public, private, ports, &HashMap::new())
    }

    /// As [`Circuit::evaluate`], but hint outputs listed in `forced` take
    /// the given values instead. This is how a dishonest prover picks the
    /// unconstrained part of a witness.
    pub fn evaluate_forced(
        &self,
        public: &[Fe],
        private: &[Fe],
        ports: &[Fe],
        forced: &HashMap<Wire, Fe>,
    ) -> Result<Vec<Fe>, ZkError> {
        for (want, got) in [
            (self.public.len(), public.len()),
            (self.private.len(), private.len()),
            (self.ports.len(), ports.len()),
        ] {
            if want != got {
                return Err(ZkError::InputLength { expected: want, got });
            }
        }
        let mut w = vec![Fe::ZERO; self.n_wires as usize];
        for (ids, vals) in [(&self.public, public), (&self.private, private), (&self.ports, ports)] {
            for (i, v) in ids.iter().zip(vals) {
                w[*i as usize] = *v;
            }
        }
        for g in &self.gates {
            match *g {
                Gate::Const { out, value } => w[out as usize] = value,
                Gate::Add { a, b, out } => w[out as usize] = w[a as usize] + w[b as usize],
                Gate::Mul { a, b, out } => w[out as usize] = w[a as usize] * w[b as usize],
                Gate::Hint { hint, input, out } => {
                    w[out as usize] = forced
                        .get(&out)
                        .copied()
                        .unwrap_or_else(|| run_hint(hint, w[input as usize]))
                }
                _ => {}
            }
        }
        Ok(w)
    }

    /// Checks every gate against a full wire assignment.
    pub fn check(&self, w: &[Fe]) -> Result<(), ZkError> {
        if w.len() != self.n_wires as usize {
            return Err(ZkError::InputLength {
                expected: self.n_wires as usize,
                got: w.len(),
            });
        }
        for (id, g) in self.gates.iter().enumerate() {
            let ok = match *g {
                Gate::Const { out, value } => w[out as usize] == value,
                Gate::Add { a, b, out } => w[out as usize] == w[a as usize] + w[b as usize],
                Gate::Mul { a, b, out } => w[out as usize] == w[a as usize] * w[b as usize],
                Gate::Bool { w: x } => {
                    let v = w[x as usize];
                    v * (v - Fe::ONE) == Fe::ZERO
                }
                Gate::Range { w: x, bits } => bits >= 64 || w[x as usize].value() < 1u64 << bits,
                Gate::Hint { .. } => true,
                Gate::AssertEq { a, b } => w[a as usize] == w[b as usize],
            };
            if !ok {
                return Err(ZkError::UnsatisfiableWitness { gate: id });
            }
        }
        Ok(())
    }

    /// Output wires of hints, in gate order.
    pub fn hint_wires(&self) -> Vec<(Hint, Wire)> {
        self.gates
            .iter()
            .filter_map(|g| match g {
                Gate::Hint { hint, out, .. } => Some((*hint, *out)),
                _ => None,
            })
            .collect()
    }

    pub fn read(&self, w: &[Fe], ids: &[Wire]) -> Vec<Fe> {
        ids.iter().map(|i| w[*i as usize]).collect()
    }

    /// Canonical little-endian encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RMCK");
        out.extend_from_slice(&self.n_wires.to_le_bytes());
        for list in [&self.public, &self.private, &self.ports, &self.outputs] {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for w in list {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.gates.len() as u32).to_le_bytes());
        for g in &self.gates {
            let (tag, words): (u8, Vec<u64>) = match *g {
                Gate::Const { out, value } => (0, vec![out as u64, value.value()]),
                Gate::Add { a, b, out } => (1, vec![a as u64, b as u64, out as u64]),
                Gate::Mul { a, b, out } => (2, vec![a as u64, b as u64, out as u64]),
                Gate::Bool { w } => (3, vec![w as u64]),
                Gate::Range { w, bits } => (4, vec![w as u64, bits as u64]),
                Gate::Hint { hint, input, out } => {
                    let h = match hint {
                        Hint::FloorRem { shift } => shift as u64,
                        Hint::NonNegative => u64::MAX,
                    };
                    (5, vec![h, input as u64, out as u64])
                }
                Gate::AssertEq { a, b } => (6, vec![a as u64, b as u64]),
            };
            out.push(tag);
            for x in words {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

fn run_hint(h: Hint, x: Fe) -> Fe {
    match h {
        Hint::FloorRem { shift } => Fe::from_i128(x.signed().rem_euclid(1i128 << shift)),
        Hint::NonNegative => {
            if x.signed() >= 0 {
                Fe::ONE
            } else {
                Fe::ZERO
            }
        }
    }
}

/// Joins `first`'s outputs to `second`'s ports. Inputs are concatenated
/// (first then second) and the outputs are `second`'s. An empty circuit on
/// either side leaves the other unchanged.
pub fn compose(first: &Circuit, second: &Circuit) -> Result<Circuit, ZkError> {
    if first.is_empty() {
        return Ok(second.clone());
    }
    if second.is_empty() {
        return Ok(first.clone());
    }
    if first.outputs.len() != second.ports.len() {
        return Err(ZkError::ArityMismatch {
            outputs: first.outputs.len(),
            ports: second.ports.len(),
        });
    }
    let mut map: Vec<Wire> = vec![Wire::MAX; second.n_wires as usize];
    for (p, o) in second.ports.iter().zip(&first.outputs) {
        map[*p as usize] = *o;
    }
    let mut next = first.n_wires;
    for slot in map.iter_mut() {
        if *slot == Wire::MAX {
            *slot = next;
            next += 1;
        }
    }
    let f = |w: Wire| map[w as usize];
    let mut gates = first.gates.clone();
    gates.extend(second.gates.iter().map(|g| g.map(&f)));
    Ok(Circuit {
        n_wires: next,
        gates,
        public: first.public.iter().copied().chain(second.public.iter().map(|w| f(*w))).collect(),
        private: first.private.iter().copied().chain(second.private.iter().map(|w| f(*w))).collect(),
        ports: first.ports.clone(),
        outputs: second.outputs.iter().map(|w| f(*w)).collect(),
    })
}

#[derive(Debug, Default)]
pub struct Builder {
    c: Circuit,
    consts: HashMap<Fe, Wire>,
}

impl Builder {
    pub fn new() -> Self {
        Builder::default()
    }

    fn fresh(&mut self) -> Wire {
        let w = self.c.n_wires;
        self.c.n_wires += 1;
        w
    }

    pub fn public_input(&mut self) -> Wire {
        let w = self.fresh();
        self.c.public.push(w);
        w
    }

    pub fn private_input(&mut self) -> Wire {
        let w = self.fresh();
        self.c.private.push(w);
        w
    }

    pub fn port(&mut self) -> Wire {
        let w = self.fresh();
        self.c.ports.push(w);
        w
    }

    pub fn output(&mut self, w: Wire) {
        self.c.outputs.push(w);
    }

    pub fn constant(&mut self, value: Fe) -> Wire {
        if let Some(w) = self.consts.get(&value) {
            return *w;
        }
        let out = self.fresh();
        self.c.gates.push(Gate::Const { out, value });
        self.consts.insert(value, out);
        out
    }

    pub fn add(&mut self, a: Wire, b: Wire) -> Wire {
        let out = self.fresh();
        self.c.gates.push(Gate::Add { a, b, out });
        out
    }

    pub fn mul(&mut self, a: Wire, b: Wire) -> Wire {
        let out = self.fresh();
        self.c.gates.push(Gate::Mul { a, b, out });
        out
    }

    pub fn sub(&mut self, a: Wire, b: Wire) -> Wire {
        let m1 = self.constant(-Fe::ONE);
        let nb = self.mul(b, m1);
        self.add(a, nb)
    }

    pub fn boolean(&mut self, w: Wire) {
        self.c.gates.push(Gate::Bool { w });
    }

    pub fn range(&mut self, w: Wire, bits: u32) {
        self.c.gates.push(Gate::Range { w, bits });
    }

    pub fn hint(&mut self, hint: Hint, input: Wire) -> Wire {
        let out = self.fresh();
        self.c.gates.push(Gate::Hint { hint, input, out });
        out
    }

    pub fn assert_eq(&mut self, a: Wire, b: Wire) {
        self.c.gates.push(Gate::AssertEq { a, b });
    }

    /// Constrains signed(w) ∈ [−2^bits, 2^bits).
    pub fn signed_range(&mut self, w: Wire, bits: u32) {
        let off = self.constant(Fe::new(1u64 << bits));
        let s = self.add(w, off);
        self.range(s, bits + 1);
    }

    /// floor(x / 2^shift) for signed(x) ∈ [−2^(bits+shift), 2^(bits+shift)).
    /// The remainder is a hint bounded to [0, 2^shift) and the quotient is
    /// range-checked, which pins both down.
    pub fn truncate(&mut self, x: Wire, shift: u32, bits: u32) -> Wire {
        let r = self.hint(Hint::FloorRem { shift }, x);
        self.range(r, shift);
        let diff = self.sub(x, r);
        let inv = self.constant(Fe::new(1u64 << shift).inv());
        let q = self.mul(diff, inv);
        self.signed_range(q, bits);
        q
    }

    /// Boolean [signed(y) ≥ 0] for signed(y) ∈ [−2^bits, 2^bits).
    /// With b the hinted bit, u = b·(2y + 1) − y − 1 equals y when b = 1 and
    /// −y − 1 when b = 0; u ∈ [0, 2^bits) forces the right b.
    pub fn non_negative(&mut self, y: Wire, bits: u32) -> Wire {
        let b = self.hint(Hint::NonNegative, y);
        self.boolean(b);
        let one = self.constant(Fe::ONE);
        let y2 = self.add(y, y);
        let y21 = self.add(y2, one);
        let t = self.mul(b, y21);
        let t = self.sub(t, y);
        let u = self.sub(t, one);
        self.range(u, bits);
        b
    }

    pub fn finish(self) -> Circuit {
        self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(c: &Circuit, public: &[i64], private: &[i64]) -> Result<Vec<Fe>, ZkError> {
        let p: Vec<Fe> = public.iter().map(|v| Fe::from_i64(*v)).collect();
        let q: Vec<Fe> = private.iter().map(|v| Fe::from_i64(*v)).collect();
        let w = c.evaluate(&p, &q, &[])?;
        c.check(&w)?;
        Ok(c.read(&w, &c.outputs))
    }

    #[test]
    fn truncate_is_floor() {
        let mut b = Builder::new();
        let x = b.public_input();
        let q = b.truncate(x, 16, 40);
        b.output(q);
        let c = b.finish();
        c.validate().unwrap();
        for v in [0i64, 1, -1, 65535, 65536, -65536, -65537, 123456789, -987654321] {
            assert_eq!(run(&c, &[v], &[]).unwrap()[0].signed(), (v as i128) >> 16, "{v}");
        }
    }

    #[test]
    fn forged_remainder_is_rejected() {
        let mut b = Builder::new();
        let x = b.public_input();
        let q = b.truncate(x, 16, 40);
        b.output(q);
        let c = b.finish();
        let mut w = c.evaluate(&[Fe::from_i64(200_000)], &[], &[]).unwrap();
        // shift the remainder by one and recompute every downstream wire
        let r = c.gates.iter().find_map(|g| match g {
            Gate::Hint { out, .. } => Some(*out),
            _ => None,
        });
        w[r.unwrap() as usize] = w[r.unwrap() as usize] + Fe::ONE;
        for g in &c.gates {
            match *g {
                Gate::Add { a, b, out } => w[out as usize] = w[a as usize] + w[b as usize],
                Gate::Mul { a, b, out } => w[out as usize] = w[a as usize] * w[b as usize],
                _ => {}
            }
        }
        assert!(matches!(c.check(&w), Err(ZkError::UnsatisfiableWitness { .. })));
    }

    #[test]
    fn comparison_gadget() {
        let mut b = Builder::new();
        let y = b.public_input();
        let bit = b.non_negative(y, 20);
        b.output(bit);
        let c = b.finish();
        for v in [-5i64, -1, 0, 1, 7, (1 << 20) - 1, -(1 << 20)] {
            assert_eq!(run(&c, &[v], &[]).unwrap()[0], Fe::from_i64(i64::from(v >= 0)), "{v}");
        }
        // out of the declared range the witness cannot satisfy the range gate
        assert!(run(&c, &[1 << 20], &[]).is_err());
    }

    #[test]
    fn validate_catches_double_drive_and_order() {
        let mut c = Circuit {
            n_wires: 2,
            public: vec![0],
            gates: vec![Gate::Add { a: 0, b: 0, out: 0 }],
            ..Circuit::default()
        };
        assert!(c.validate().is_err());
        c.gates = vec![Gate::Add { a: 1, b: 0, out: 1 }];
        assert!(c.validate().is_err());
        c.gates = vec![Gate::Add { a: 0, b: 0, out: 1 }];
        c.outputs = vec![1];
        c.validate().unwrap();
    }

    #[test]
    fn hash_changes_with_structure() {
        let mut b = Builder::new();
        let x = b.public_input();
        let y = b.add(x, x);
        b.output(y);
        let c1 = b.finish();
        let mut c2 = c1.clone();
        c2.gates[0] = Gate::Mul { a: 0, b: 0, out: 1 };
        assert_ne!(c1.hash(), c2.hash());
        assert_eq!(c1.hash(), c1.clone().hash());
    }

    #[test]
    fn compose_with_empty_is_identity() {
        let mut b = Builder::new();
        let x = b.public_input();
        let y = b.mul(x, x);
        b.output(y);
        let c = b.finish();
        assert_eq!(compose(&Circuit::default(), &c).unwrap(), c);
        assert_eq!(compose(&c, &Circuit::default()).unwrap(), c);
        let mut b = Builder::new();
        let p1 = b.port();
        let p2 = b.port();
        let s = b.add(p1, p2);
        b.output(s);
        assert!(matches!(
            compose(&c, &b.finish()),
            Err(ZkError::ArityMismatch { outputs: 1, ports: 2 })
        ));
    }
}
