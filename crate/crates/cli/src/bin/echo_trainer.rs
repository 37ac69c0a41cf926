//! Loopback trainer for protocol tests: replies `score = u[0]`, `cost = 0.1`.
//!
//! Flags change its behaviour: `--version N` announces protocol `N` in the
//! ready message, `--exit-before-ready` writes to stderr and exits,
//! `--malformed` answers evals with a non-JSON line, `--sleep S` delays every
//! reply, `--sleep-first S` delays only the first, `--no-cost` omits the
//! cost, `--fail` answers with an error reply, `--stale` first replays a
//! result for an earlier id.

use std::io::{BufRead, Write};
use std::time::Duration;

use autobct::oracle::Message;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag = |f: &str| args.iter().any(|a| a == f);
    let value = |f: &str| {
        args.iter()
            .position(|a| a == f)
            .and_then(|i| args.get(i + 1))
            .map(|s| s.parse::<f64>().expect("numeric flag value"))
    };
    if flag("--exit-before-ready") {
        eprintln!("echo-trainer: refusing to start");
        std::process::exit(3);
    }
    let version = value("--version").map(|v| v as u32);
    let sleep = value("--sleep").unwrap_or(0.0);
    let mut first_sleep = value("--sleep-first");
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let reply = match Message::parse(&line) {
            Ok(Message::Hello { .. }) => Message::Ready { version }.to_line(),
            Ok(Message::Eval { id, u, .. }) => {
                std::thread::sleep(Duration::from_secs_f64(sleep + first_sleep.take().unwrap_or(0.0)));
                if flag("--malformed") {
                    "this is not json".to_string()
                } else if flag("--fail") {
                    Message::Error {
                        id,
                        message: "model diverged".into(),
                    }
                    .to_line()
                } else {
                    let result = Message::Result {
                        id,
                        score: u[0],
                        cost: if flag("--no-cost") { None } else { Some(0.1) },
                    };
                    if flag("--stale") && id > 1 {
                        let old = Message::Result {
                            id: id - 1,
                            score: -1.0,
                            cost: Some(99.0),
                        };
                        let _ = writeln!(out, "{}", old.to_line());
                    }
                    result.to_line()
                }
            }
            Ok(Message::Shutdown) => break,
            Ok(_) => continue,
            Err(e) => {
                eprintln!("echo-trainer: {e}");
                continue;
            }
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
