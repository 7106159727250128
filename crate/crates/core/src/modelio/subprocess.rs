use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::ModelError;

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Running {
    fn drop(&mut self) {
        // the shell may not exec the adapter, so the whole group goes
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A long-running adapter process speaking one JSON object per line.
///
/// The process is respawned on the next call after a timeout or exit, since
/// a late reply would otherwise be read as the answer to the next request.
pub(super) struct SubprocessBackend {
    cmd: String,
    running: Option<Running>,
}

impl SubprocessBackend {
    pub(super) fn spawn(cmd: &str) -> Result<Self, ModelError> {
        let mut backend = Self { cmd: cmd.to_string(), running: None };
        backend.running = Some(backend.start()?);
        Ok(backend)
    }

    fn start(&self) -> Result<Running, ModelError> {
        let mut command = Command::new("sh");
        command.arg("-c").arg(&self.cmd);
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Transport(format!("cannot spawn `{}`: {e}", self.cmd)))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Running { child, stdin, lines: rx })
    }

    pub(super) fn call(&mut self, line: &str, timeout: Duration) -> Result<String, ModelError> {
        if self.running.is_none() {
            self.running = Some(self.start()?);
        }
        let running = self.running.as_mut().expect("started above");
        let written = running
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| running.stdin.write_all(b"\n"))
            .and_then(|_| running.stdin.flush());
        if let Err(e) = written {
            self.running = None;
            return Err(ModelError::Transport(format!("write to `{}` failed: {e}", self.cmd)));
        }
        match running.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                self.running = None;
                Err(ModelError::Transport(format!("read from `{}` failed: {e}", self.cmd)))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.running = None;
                Err(ModelError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.running = None;
                Err(ModelError::Transport(format!("`{}` exited", self.cmd)))
            }
        }
    }
}
