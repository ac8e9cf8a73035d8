use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{AttentionError, AttentionTensor, StubTokenizer, Tokenizer, WordPieceTokenizer};

/// A model that tokenizes text and returns full self-attention tensors.
pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;

    fn layers(&self) -> usize;

    fn heads(&self) -> usize;

    fn tokenizer(&self) -> &dyn Tokenizer;

    fn attentions(&self, tokens: &[String]) -> Result<AttentionTensor<f32>, AttentionError>;

    /// Batched variant; implementations may run the batch in parallel but
    /// must return results in input order.
    fn attentions_batch(
        &self,
        batch: &[Vec<String>],
    ) -> Result<Vec<AttentionTensor<f32>>, AttentionError> {
        batch.iter().map(|t| self.attentions(t)).collect()
    }

    /// Backend, shape and tokenizer, recorded in every artifact.
    fn identity(&self) -> String {
        format!(
            "{} L={} H={} tokenizer={}",
            self.name(),
            self.layers(),
            self.heads(),
            self.tokenizer().identity()
        )
    }
}

/// Deterministic pseudo-random backend for tests and dry runs. Every row is
/// a normalized draw from a generator seeded by `(seed, tokens)`, so
/// attention carries no information about the set an example came from.
#[derive(Debug, Clone)]
pub struct StubBackend {
    seed: u64,
    layers: usize,
    heads: usize,
    tokenizer: StubTokenizer,
    name: String,
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_shape(seed, 12, 12)
    }

    pub fn with_shape(seed: u64, layers: usize, heads: usize) -> Self {
        StubBackend {
            seed,
            layers,
            heads,
            tokenizer: StubTokenizer::default(),
            name: format!("stub:{seed}"),
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: StubTokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    fn rng_for(&self, tokens: &[String]) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for t in tokens {
            hasher.update(t.as_bytes());
            hasher.update([0x1f]);
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

/// `stub_backend(seed)` with the default 12 x 12 grid.
pub fn stub_backend(seed: u64) -> StubBackend {
    StubBackend::new(seed)
}

impl ModelBackend for StubBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn heads(&self) -> usize {
        self.heads
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn attentions(&self, tokens: &[String]) -> Result<AttentionTensor<f32>, AttentionError> {
        let s = tokens.len();
        let mut rng = self.rng_for(tokens);
        let mut values = Vec::with_capacity(self.layers * self.heads * s * s);
        let mut row = vec![0f64; s];
        for _ in 0..self.layers * self.heads * s {
            // exponential draws normalize to a flat Dirichlet row
            for w in row.iter_mut() {
                let u: f64 = rng.random();
                *w = -(1.0 - u).ln() + 1e-12;
            }
            let sum: f64 = row.iter().sum();
            values.extend(row.iter().map(|w| (w / sum) as f32));
        }
        AttentionTensor::new(self.layers, self.heads, s, values)
    }

    fn attentions_batch(
        &self,
        batch: &[Vec<String>],
    ) -> Result<Vec<AttentionTensor<f32>>, AttentionError> {
        batch.par_iter().map(|t| self.attentions(t)).collect()
    }
}

const BRIDGE_SCRIPT: &str = r#"
import json, sys
import torch
from transformers import AutoModel

path = sys.argv[1]
try:
    model = AutoModel.from_pretrained(path, attn_implementation="eager")
except TypeError:
    model = AutoModel.from_pretrained(path)
model.eval()
cfg = model.config
print(json.dumps({"layers": cfg.num_hidden_layers, "heads": cfg.num_attention_heads,
                  "name": str(getattr(cfg, "_name_or_path", path) or path)}), flush=True)
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    try:
        ids = torch.tensor([json.loads(line)["ids"]])
        with torch.no_grad():
            out = model(input_ids=ids, attention_mask=torch.ones_like(ids), output_attentions=True)
        att = torch.stack(out.attentions)[:, 0].float()
        print(json.dumps({"seq": int(att.shape[-1]), "data": att.reshape(-1).tolist()}), flush=True)
    except Exception as e:
        print(json.dumps({"error": repr(e)}), flush=True)
"#;

#[derive(Deserialize)]
struct Handshake {
    layers: usize,
    heads: usize,
    name: String,
}

#[derive(Deserialize)]
struct Reply {
    seq: Option<usize>,
    data: Option<Vec<f32>>,
    error: Option<String>,
}

struct Bridge {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Bridge {
    fn read_json_line(&mut self) -> Result<String, AttentionError> {
        let mut line = String::new();
        loop {
            line.clear();
            let n = self
                .stdout
                .read_line(&mut line)
                .map_err(|e| AttentionError::Backend(format!("bridge read failed: {e}")))?;
            if n == 0 {
                return Err(AttentionError::Backend("model bridge exited".into()));
            }
            if line.trim_start().starts_with('{') {
                return Ok(line);
            }
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Pretrained transformer served by a Python `transformers` subprocess.
/// Tokenization stays on this side (WordPiece over the model's vocabulary);
/// the bridge only receives token ids.
pub struct PythonBackend {
    name: String,
    layers: usize,
    heads: usize,
    tokenizer: WordPieceTokenizer,
    bridge: Mutex<Bridge>,
}

impl PythonBackend {
    /// Starts the bridge for a model directory (or hub id resolvable
    /// offline) whose vocabulary lives at `vocab`.
    pub fn spawn(
        python: &str,
        model: &str,
        vocab: &Path,
        lowercase: bool,
    ) -> Result<Self, AttentionError> {
        let tokenizer = WordPieceTokenizer::from_vocab_file(vocab, lowercase)?;
        let mut child = Command::new(python)
            .arg("-c")
            .arg(BRIDGE_SCRIPT)
            .arg(model)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| AttentionError::Backend(format!("cannot start {python}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut bridge = Bridge {
            child,
            stdin,
            stdout,
        };
        let hello: Handshake = serde_json::from_str(&bridge.read_json_line()?)
            .map_err(|e| AttentionError::Backend(format!("bad bridge handshake: {e}")))?;
        Ok(PythonBackend {
            name: format!("transformers:{}", hello.name),
            layers: hello.layers,
            heads: hello.heads,
            tokenizer,
            bridge: Mutex::new(bridge),
        })
    }

    /// Model directory containing `vocab.txt`.
    pub fn from_model_dir(python: &str, dir: &Path, lowercase: bool) -> Result<Self, AttentionError> {
        let vocab: PathBuf = dir.join("vocab.txt");
        Self::spawn(python, &dir.to_string_lossy(), &vocab, lowercase)
    }
}

impl ModelBackend for PythonBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn heads(&self) -> usize {
        self.heads
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn attentions(&self, tokens: &[String]) -> Result<AttentionTensor<f32>, AttentionError> {
        let ids = self.tokenizer.convert_tokens_to_ids(tokens);
        let mut bridge = self
            .bridge
            .lock()
            .map_err(|_| AttentionError::Backend("bridge lock poisoned".into()))?;
        let request = serde_json::json!({ "ids": ids }).to_string();
        writeln!(bridge.stdin, "{request}")
            .and_then(|_| bridge.stdin.flush())
            .map_err(|e| AttentionError::Backend(format!("bridge write failed: {e}")))?;
        let reply: Reply = serde_json::from_str(&bridge.read_json_line()?)
            .map_err(|e| AttentionError::Backend(format!("bad bridge reply: {e}")))?;
        if let Some(err) = reply.error {
            return Err(AttentionError::Backend(err));
        }
        let (Some(seq), Some(data)) = (reply.seq, reply.data) else {
            return Err(AttentionError::Backend("bridge reply without data".into()));
        };
        if seq != tokens.len() {
            return Err(AttentionError::Backend(format!(
                "bridge returned {seq} positions for {} tokens",
                tokens.len()
            )));
        }
        AttentionTensor::new(self.layers, self.heads, seq, data)
    }
}
