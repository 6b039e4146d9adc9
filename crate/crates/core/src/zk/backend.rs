//! Proof backends and the proof / verifier-key files.
//!
//! Both files are little-endian:
//!
//! ```text
//! VK:    "RMVK" u32 version | circuit hash [32] | n_bits u32 | theta i64
//!        | frac_bits u32 | n_public u32 | gates u64 | wires u64
//!        | private commitment [32]
//! proof: "RMPF" u32 version | circuit hash [32] | n_bits u32 | theta i64
//!        | n_public u32 | public inputs u64 × n_public | claimed u8
//!        | proof length u32 | proof bytes
//! ```
//!
//! `theta` is θ·2^frac_bits. The last public input is θ, the ones before it
//! the embedding. The private commitment is a salted hash of the decoder
//! parameters and M, fixed when the owner registers the watermark; without
//! it a prover could pick M = M′.

use sha2::{Digest, Sha256};

use super::circuit::Circuit;
use super::field::Fe;
use super::ZkError;

pub const VK_MAGIC: &[u8; 4] = b"RMVK";
pub const PROOF_MAGIC: &[u8; 4] = b"RMPF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierKey {
    pub circuit_hash: [u8; 32],
    pub n_bits: u32,
    pub theta_fp: i64,
    pub frac_bits: u32,
    pub n_public: u32,
    pub gates: u64,
    pub wires: u64,
    pub private_commitment: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofArtifact {
    pub circuit_hash: [u8; 32],
    pub n_bits: u32,
    pub theta_fp: i64,
    pub public: Vec<Fe>,
    /// Claimed valid_BER.
    pub claimed: u8,
    pub proof: Vec<u8>,
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ZkError> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.b.len());
        let end = end.ok_or_else(|| ZkError::Format("truncated".into()))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N], ZkError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32, ZkError> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64, ZkError> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn i64(&mut self) -> Result<i64, ZkError> {
        Ok(i64::from_le_bytes(self.arr()?))
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<(), ZkError> {
        if self.take(4)? != magic {
            return Err(ZkError::Format("bad magic".into()));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(ZkError::Format(format!("unsupported version {v}")));
        }
        Ok(())
    }
    fn end(&self) -> Result<(), ZkError> {
        if self.at != self.b.len() {
            return Err(ZkError::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

impl VerifierKey {
    pub fn for_circuit(c: &Circuit, n_bits: usize, theta_fp: i64, frac_bits: u32, private_commitment: [u8; 32]) -> Self {
        VerifierKey {
            circuit_hash: c.hash(),
            n_bits: n_bits as u32,
            theta_fp,
            frac_bits,
            n_public: c.public.len() as u32,
            gates: c.gates.len() as u64,
            wires: c.n_wires as u64,
            private_commitment,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(108);
        out.extend_from_slice(VK_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.circuit_hash);
        out.extend_from_slice(&self.n_bits.to_le_bytes());
        out.extend_from_slice(&self.theta_fp.to_le_bytes());
        out.extend_from_slice(&self.frac_bits.to_le_bytes());
        out.extend_from_slice(&self.n_public.to_le_bytes());
        out.extend_from_slice(&self.gates.to_le_bytes());
        out.extend_from_slice(&self.wires.to_le_bytes());
        out.extend_from_slice(&self.private_commitment);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ZkError> {
        let mut r = Reader { b, at: 0 };
        r.header(VK_MAGIC)?;
        let vk = VerifierKey {
            circuit_hash: r.arr()?,
            n_bits: r.u32()?,
            theta_fp: r.i64()?,
            frac_bits: r.u32()?,
            n_public: r.u32()?,
            gates: r.u64()?,
            wires: r.u64()?,
            private_commitment: r.arr()?,
        };
        r.end()?;
        Ok(vk)
    }
}

impl ProofArtifact {
    /// Everything before the proof bytes.
    fn statement_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PROOF_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.circuit_hash);
        out.extend_from_slice(&self.n_bits.to_le_bytes());
        out.extend_from_slice(&self.theta_fp.to_le_bytes());
        out.extend_from_slice(&(self.public.len() as u32).to_le_bytes());
        for v in &self.public {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.claimed);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.statement_bytes();
        out.extend_from_slice(&(self.proof.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.proof);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ZkError> {
        let mut r = Reader { b, at: 0 };
        r.header(PROOF_MAGIC)?;
        let circuit_hash = r.arr()?;
        let n_bits = r.u32()?;
        let theta_fp = r.i64()?;
        let n = r.u32()? as usize;
        if n > (b.len() / 8) {
            return Err(ZkError::Format("public input count exceeds file".into()));
        }
        let mut public = Vec::with_capacity(n);
        for _ in 0..n {
            let v = Fe::from_le_bytes(r.arr()?).ok_or_else(|| ZkError::Format("non-canonical field element".into()))?;
            public.push(v);
        }
        let claimed = r.arr::<1>()?[0];
        let len = r.u32()? as usize;
        let proof = r.take(len)?.to_vec();
        r.end()?;
        Ok(ProofArtifact {
            circuit_hash,
            n_bits,
            theta_fp,
            public,
            claimed,
            proof,
        })
    }
}

/// Seam for real proof systems.
pub trait ProofBackend {
    fn name(&self) -> &'static str;
    fn prove(
        &self,
        circuit: &Circuit,
        vk: &VerifierKey,
        public: &[Fe],
        private: &[Fe],
        salt: &[u8; 32],
    ) -> Result<ProofArtifact, ZkError>;
    fn verify(&self, proof: &ProofArtifact, vk: &VerifierKey) -> bool;

    /// Parses both files first; malformed input verifies false.
    fn verify_bytes(&self, proof: &[u8], vk: &[u8]) -> bool {
        match (ProofArtifact::from_bytes(proof), VerifierKey::from_bytes(vk)) {
            (Ok(p), Ok(k)) => self.verify(&p, &k),
            _ => false,
        }
    }
}

/// Satisfaction-transcript backend: the prover evaluates the circuit,
/// checks every gate, and emits a witness commitment plus a digest binding
/// the commitment, the verifier key and the full statement. It has the
/// interface of a proof system, not its cryptographic strength.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

/// Salted commitment to the private inputs.
pub fn commit_private(private: &[Fe], salt: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rosemark-private");
    h.update(salt);
    for w in private {
        h.update(w.to_le_bytes());
    }
    h.finalize().into()
}

fn witness_commitment(wires: &[Fe]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rosemark-witness");
    for w in wires {
        h.update(w.to_le_bytes());
    }
    h.finalize().into()
}

fn binding_digest(vk: &VerifierKey, statement: &[u8], commitment: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rosemark-proof");
    h.update(Sha256::digest(vk.to_bytes()));
    h.update(statement);
    h.update(commitment);
    h.finalize().into()
}

impl ProofBackend for ReferenceBackend {
    fn name(&self) -> &'static str {
        "satisfaction-transcript"
    }

    fn prove(
        &self,
        circuit: &Circuit,
        vk: &VerifierKey,
        public: &[Fe],
        private: &[Fe],
        salt: &[u8; 32],
    ) -> Result<ProofArtifact, ZkError> {
        if circuit.hash() != vk.circuit_hash {
            return Err(ZkError::Format("verifier key does not match the circuit".into()));
        }
        if commit_private(private, salt) != vk.private_commitment {
            return Err(ZkError::CommitmentMismatch);
        }
        let wires = circuit.evaluate(public, private, &[])?;
        circuit.check(&wires)?;
        let claimed = match circuit.read(&wires, &circuit.outputs).as_slice() {
            [v] if *v == Fe::ONE => 1,
            [v] if *v == Fe::ZERO => 0,
            _ => return Err(ZkError::Malformed("expected one boolean output".into())),
        };
        let mut art = ProofArtifact {
            circuit_hash: vk.circuit_hash,
            n_bits: vk.n_bits,
            theta_fp: vk.theta_fp,
            public: public.to_vec(),
            claimed,
            proof: Vec::new(),
        };
        let commitment = witness_commitment(&wires);
        let digest = binding_digest(vk, &art.statement_bytes(), &commitment);
        art.proof = commitment.iter().chain(&digest).copied().collect();
        Ok(art)
    }

    fn verify(&self, p: &ProofArtifact, vk: &VerifierKey) -> bool {
        if p.circuit_hash != vk.circuit_hash
            || p.n_bits != vk.n_bits
            || p.theta_fp != vk.theta_fp
            || p.public.len() != vk.n_public as usize
            || p.public.last() != Some(&Fe::from_i64(vk.theta_fp))
            || p.claimed != 1
            || p.proof.len() != 64
        {
            return false;
        }
        let (commitment, digest) = p.proof.split_at(32);
        binding_digest(vk, &p.statement_bytes(), commitment).as_slice() == digest
    }
}
