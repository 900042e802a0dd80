//! Out-of-process backend speaking JSON lines over stdin/stdout.
//!
//! Each request is one [`ScoreRequest`] serialized on a single line. The
//! backend answers with one line holding either a JSON array of
//! [`ScoreEntry`] or an object `{"error": "..."}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ScoreEntry, ScoreError, ScoreRequest, Scorer, ScoringMode};

struct Pipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct SubprocessScorer {
    model_id: String,
    mode: ScoringMode,
    pipes: Mutex<Pipes>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Ok(Vec<ScoreEntry>),
    Err { error: String },
}

fn transport(message: String) -> ScoreError {
    ScoreError::Transport {
        message,
        retryable: true,
    }
}

impl SubprocessScorer {
    pub fn spawn(model_id: &str, mode: ScoringMode, program: &str, args: &[String]) -> Result<Self, ScoreError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoreError::Transport {
                message: format!("cannot start `{program}`: {e}"),
                retryable: false,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessScorer {
            model_id: model_id.into(),
            mode,
            pipes: Mutex::new(Pipes { child, stdin, stdout }),
        })
    }
}

impl Scorer for SubprocessScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mode(&self) -> ScoringMode {
        self.mode
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        let mut pipes = self.pipes.lock().unwrap();
        pipes
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipes.stdin.flush())
            .map_err(|e| transport(format!("write to backend: {e}")))?;
        let mut reply = String::new();
        let n = pipes
            .stdout
            .read_line(&mut reply)
            .map_err(|e| transport(format!("read from backend: {e}")))?;
        if n == 0 {
            return Err(transport("backend closed its output".into()));
        }
        match serde_json::from_str::<Reply>(&reply) {
            Ok(Reply::Ok(entries)) => Ok(entries),
            Ok(Reply::Err { error }) => Err(ScoreError::Backend(error)),
            Err(e) => Err(ScoreError::Protocol(format!("unparsable reply: {e}"))),
        }
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        if let Ok(p) = self.pipes.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}
