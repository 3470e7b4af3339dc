//! Plumbing for external services reached over a subprocess or HTTP.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Runs `command` once, feeding `lines` on stdin and collecting stdout lines.
pub fn run_batch(command: &[String], lines: &[String]) -> Result<Vec<String>, String> {
    let (program, args) = command.split_first().ok_or("empty command")?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| format!("cannot spawn `{program}`: {e}"))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let payload: Vec<u8> = lines.iter().flat_map(|l| l.bytes().chain(std::iter::once(b'\n'))).collect();
    let writer = std::thread::spawn(move || stdin.write_all(&payload));
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    writer
        .join()
        .map_err(|_| "stdin writer panicked".to_string())?
        .map_err(|e| format!("writing to `{program}`: {e}"))?;
    if !out.status.success() {
        return Err(format!("`{program}` exited with {}", out.status));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect())
}

/// A long-lived child process answering one JSONL line per request line.
pub struct LineProcess {
    command: Vec<String>,
    io: Mutex<Option<(Child, ChildStdin, BufReader<ChildStdout>)>>,
}

impl LineProcess {
    pub fn new(command: Vec<String>) -> Self {
        LineProcess {
            command,
            io: Mutex::new(None),
        }
    }

    fn spawn(&self) -> Result<(Child, ChildStdin, BufReader<ChildStdout>), String> {
        let (program, args) = self.command.split_first().ok_or("empty command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot spawn `{program}`: {e}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok((child, stdin, stdout))
    }

    /// Sends one line and reads one line back. A dead process is respawned
    /// on the next call.
    pub fn request(&self, line: &str) -> Result<String, String> {
        let mut guard = self.io.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let (_, stdin, stdout) = guard.as_mut().expect("spawned");
        let result = (|| {
            stdin.write_all(line.as_bytes()).map_err(|e| e.to_string())?;
            stdin.write_all(b"\n").map_err(|e| e.to_string())?;
            stdin.flush().map_err(|e| e.to_string())?;
            let mut reply = String::new();
            match stdout.read_line(&mut reply) {
                Ok(0) => Err("process closed its output".to_string()),
                Ok(_) => Ok(reply.trim_end_matches(['\n', '\r']).to_owned()),
                Err(e) => Err(e.to_string()),
            }
        })();
        if result.is_err() {
            if let Some((mut child, _, _)) = guard.take() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
        result
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        if let Some((mut child, stdin, _)) = self.io.get_mut().ok().and_then(Option::take) {
            drop(stdin);
            let _ = child.wait();
        }
    }
}

pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(url: &str, body: &Req) -> Result<Resp, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into();
    agent
        .post(url)
        .send_json(body)
        .map_err(|e| e.to_string())?
        .body_mut()
        .read_json::<Resp>()
        .map_err(|e| e.to_string())
}

/// Joins a base URL and a route without doubling slashes.
pub fn endpoint(base: &str, route: &str) -> String {
    if base.ends_with(route) {
        return base.to_owned();
    }
    format!("{}/{}", base.trim_end_matches('/'), route.trim_start_matches('/'))
}
