use std::io::Write as _;
use std::net::TcpStream;
use std::thread;

use rand::Rng;
use rovertrack::bridge::{read_frame, send, write_frame, Client, Frame, Message, Server, Session, MAX_FRAME};
use rovertrack::rng::{seeded, Stream};
use rovertrack::{Error, RegimeConfig, VecEnv, ACT_DIM, OBS_DIM};

fn small() -> RegimeConfig {
    RegimeConfig {
        n_envs: 2,
        ..RegimeConfig::default()
    }
}

fn spawn(defaults: RegimeConfig, sessions: usize) -> (std::net::SocketAddr, thread::JoinHandle<rovertrack::Result<()>>) {
    let server = Server::bind("127.0.0.1:0", defaults).unwrap();
    let addr = server.local_addr().unwrap();
    (addr, thread::spawn(move || server.run(Some(sessions))))
}

#[test]
fn single_env_session_matches_in_process_rewards() {
    let cfg = RegimeConfig {
        n_envs: 1,
        master_seed: 7,
        ..RegimeConfig::default()
    };
    let (addr, handle) = spawn(small(), 1);
    let mut client = Client::connect(addr).unwrap();
    let resolved = client.configure(&cfg).unwrap();
    assert_eq!(resolved, cfg);
    let obs = client.reset(Some(7)).unwrap();
    assert_eq!(obs.len(), OBS_DIM);

    let mut local = VecEnv::new(cfg).unwrap();
    assert_eq!(local.reset(), obs);
    let mut rng = seeded(7, Stream::Policy);
    for _ in 0..100 {
        let a: Vec<f64> = (0..ACT_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let remote = client.step(&a).unwrap();
        let here = local.step(&a).unwrap();
        assert_eq!(remote.observations.len(), OBS_DIM);
        assert_eq!(remote.rewards.len(), 1);
        assert_eq!(remote.rewards[0].to_bits(), here.rewards[0].to_bits());
        assert_eq!(remote.observations, here.observations);
    }
    client.close().unwrap();
    handle.join().unwrap().unwrap();
}

#[test]
fn protocol_errors_are_replies_not_disconnects() {
    let (addr, handle) = spawn(small(), 1);
    let mut client = Client::connect(addr).unwrap();
    // step before reset
    assert!(matches!(client.step(&[0.0; 4]), Err(Error::Protocol(_))));
    // version mismatch
    let bad = Message::Hello {
        version: Some("9".into()),
        obs_dim: None,
        act_dim: None,
    };
    assert!(matches!(client.request(&bad), Err(Error::Protocol(_))));
    // wrong action count
    client.reset(None).unwrap();
    assert_eq!(client.n_envs, 2);
    assert!(client.step(&[0.0; 3]).is_err());
    // configure by instance count only
    match client
        .request(&Message::Configure {
            config: None,
            n_envs: Some(3),
        })
        .unwrap()
    {
        Message::Configure { n_envs, .. } => assert_eq!(n_envs, Some(3)),
        other => panic!("{other:?}"),
    }
    assert_eq!(client.reset(None).unwrap().len(), 3 * OBS_DIM);
    assert_eq!(client.step(&[0.0; 6]).unwrap().rewards.len(), 3);
    client.close().unwrap();
    handle.join().unwrap().unwrap();
}

#[test]
fn every_request_gets_exactly_one_reply() {
    let (addr, handle) = spawn(small(), 1);
    let mut raw = TcpStream::connect(addr).unwrap();
    let requests: Vec<Vec<u8>> = vec![
        br#"{"type":"hello"}"#.to_vec(),
        br#"{"type":"reset"}"#.to_vec(),
        b"garbage".to_vec(),
        br#"{"type":"step","actions":[0,0,0,0]}"#.to_vec(),
        br#"{"type":"step","actions":[0,0,0,0],"extra":1}"#.to_vec(),
    ];
    for r in &requests {
        write_frame(&mut raw, r).unwrap();
    }
    // pipelined requests are answered in order
    let kinds: Vec<String> = (0..requests.len())
        .map(|_| match read_frame(&mut raw).unwrap() {
            Frame::Payload(p) => serde_json::from_slice::<serde_json::Value>(&p).unwrap()["type"]
                .as_str()
                .unwrap()
                .to_string(),
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(kinds[..4], ["hello", "reset", "error", "step_result"]);
    send(&mut raw, &Message::Close).unwrap();
    assert!(matches!(read_frame(&mut raw).unwrap(), Frame::Payload(_)));
    assert!(matches!(read_frame(&mut raw).unwrap(), Frame::Eof));
    handle.join().unwrap().unwrap();
}

#[test]
fn oversize_frames_are_rejected_and_skipped() {
    let (addr, handle) = spawn(small(), 1);
    let mut raw = TcpStream::connect(addr).unwrap();
    let n = MAX_FRAME + 10;
    raw.write_all(&(n as u32).to_le_bytes()).unwrap();
    raw.write_all(&vec![b' '; n]).unwrap();
    write_frame(&mut raw, br#"{"type":"hello"}"#).unwrap();
    let kind = |f: Frame| match f {
        Frame::Payload(p) => serde_json::from_slice::<Message>(&p).unwrap(),
        other => panic!("{other:?}"),
    };
    assert!(matches!(kind(read_frame(&mut raw).unwrap()), Message::Error { .. }));
    assert!(matches!(kind(read_frame(&mut raw).unwrap()), Message::Hello { .. }));
    drop(raw);
    handle.join().unwrap().unwrap();
}

#[test]
fn session_messages_have_the_documented_shapes() {
    let mut s = Session::new(small());
    let (reply, _) = s.handle(br#"{"type":"reset","seed":5}"#);
    let v = serde_json::to_value(&reply).unwrap();
    assert_eq!(v["type"], "reset");
    assert_eq!(v["seed"], 5);
    assert_eq!(v["observations"].as_array().unwrap().len(), 2 * OBS_DIM);
    let (reply, _) = s.handle(br#"{"type":"step","actions":[1,0,0,1]}"#);
    let v = serde_json::to_value(&reply).unwrap();
    assert_eq!(v["type"], "step_result");
    for (k, len) in [("observations", 8), ("rewards", 2), ("terminated", 2), ("truncated", 2), ("infos", 2)] {
        assert_eq!(v[k].as_array().unwrap().len(), len, "{k}");
    }
    let (reply, close) = s.handle(br#"{"type":"close"}"#);
    assert!(close && reply == Message::Close);
    assert_eq!(s.requests, 3);
}
