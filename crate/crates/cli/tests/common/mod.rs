#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_capfuse"));
    cmd.env("CAPFUSE_LOG", "warn");
    cmd
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn sample_lines() -> Vec<String> {
    std::fs::read_to_string(fixture("sessions/lecture_sample.ndjson"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

pub fn golden() -> String {
    std::fs::read_to_string(fixture("sessions/lecture_sample.transcript")).unwrap()
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

pub fn wait_for_port(port: u16) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "nothing listening on {port}");
        std::thread::sleep(Duration::from_millis(25));
    }
}

/// A `capfuse serve` or `capfuse record` child that is interrupted on drop.
pub struct Server {
    pub child: Child,
    pub ingest: u16,
    pub clients: u16,
    pub metrics: u16,
}

impl Server {
    pub fn serve(extra: &[&str]) -> Server {
        let (ingest, clients, metrics) = (free_port(), free_port(), free_port());
        let child = bin()
            .args(["serve", "--ingest-port", &ingest.to_string(), "--client-port", &clients.to_string()])
            .args(["--metrics-port", &metrics.to_string()])
            .args(extra)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        wait_for_port(ingest);
        wait_for_port(clients);
        wait_for_port(metrics);
        Server {
            child,
            ingest,
            clients,
            metrics,
        }
    }

    pub fn record(out: &Path) -> Server {
        let ingest = free_port();
        let child = bin()
            .args(["record", "--ingest-port", &ingest.to_string(), "--out"])
            .arg(out)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        wait_for_port(ingest);
        Server {
            child,
            ingest,
            clients: 0,
            metrics: 0,
        }
    }

    pub fn interrupt(&mut self) {
        unsafe {
            libc::kill(self.child.id() as libc::pid_t, libc::SIGINT);
        }
    }

    /// Interrupts and waits for a clean exit.
    pub fn stop(mut self) -> std::process::ExitStatus {
        self.interrupt();
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status;
            }
            assert!(Instant::now() < deadline, "server did not exit after interrupt");
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// Sends each source's lines on its own connection, in file order.
    pub fn feed(&self, lines: &[String]) {
        let mut by_source: Vec<(String, Vec<&String>)> = Vec::new();
        for line in lines {
            let src = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v["src"].as_str().map(str::to_string))
                .unwrap_or_default();
            match by_source.iter_mut().find(|(s, _)| *s == src) {
                Some((_, v)) => v.push(line),
                None => by_source.push((src, vec![line])),
            }
        }
        std::thread::scope(|s| {
            for (_, lines) in &by_source {
                s.spawn(move || {
                    let mut conn = TcpStream::connect(("127.0.0.1", self.ingest)).unwrap();
                    for line in lines {
                        conn.write_all(line.as_bytes()).unwrap();
                        conn.write_all(b"\n").unwrap();
                    }
                    conn.flush().unwrap();
                });
            }
        });
    }

    pub fn http(&self, method: &str, path: &str, body: &str) -> (u16, String) {
        http(self.metrics, method, path, body)
    }

    pub fn report(&self) -> serde_json::Value {
        let (status, body) = self.http("GET", "/metrics", "");
        assert_eq!(status, 200, "{body}");
        serde_json::from_str(&body).unwrap()
    }

    /// Polls the metrics endpoint until `pred` holds.
    pub fn wait_report(&self, pred: impl Fn(&serde_json::Value) -> bool) -> serde_json::Value {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            let report = self.report();
            if pred(&report) {
                return report;
            }
            assert!(Instant::now() < deadline, "metrics never matched: {report}");
            std::thread::sleep(Duration::from_millis(25));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP/1.1 client: returns status and body.
pub fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut conn = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        conn,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    conn.read_to_string(&mut raw).unwrap();
    let (head, rest) = raw.split_once("\r\n\r\n").expect("complete response");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    (status, if chunked { dechunk(rest) } else { rest.to_string() })
}

fn dechunk(mut rest: &str) -> String {
    let mut out = String::new();
    while let Some((size, tail)) = rest.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&tail[..n]);
        rest = &tail[n + 2..];
    }
    out
}
