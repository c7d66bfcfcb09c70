use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcom_core::imagecore::Image;
use semcom_core::protocol::{
    region_cells, region_request_round, Channel, Direction, GateOutcome, MessageBody, PixelBox, Receiver,
    ReceiverConfig, Transcript, Transmitter,
};
use semcom_core::saliency::{Cell, ClassifierConfig, TaskModel};
use semcom_core::semcom::{analyze, context_only, full_latent, fused_for_p, plan_fixed, TransmitterView, DEFAULT_SEARCH_SET};
use semcom_core::vq::{CodecConfig, CodecModel};
use semcom_core::Error;

const SIZE: usize = 32;
const F_CTX: usize = 2;

fn codec() -> CodecModel {
    CodecModel::new(CodecConfig { codebook_size: 16, embed_dim: 8, hidden_channels: 8, seed: 3, ..CodecConfig::default() })
        .unwrap()
}

fn task() -> TaskModel {
    TaskModel::new(ClassifierConfig { class_count: 4, widths: [4, 4, 4, 4], seed: 5, ..ClassifierConfig::default() }).unwrap()
}

fn image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * SIZE * SIZE).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Image::new(3, SIZE, SIZE, data).unwrap()
}

struct Fixture {
    codec: CodecModel,
    task: TaskModel,
}

impl Fixture {
    fn new() -> Self {
        Self { codec: codec(), task: task() }
    }

    fn view(&self, seed: u64) -> TransmitterView {
        analyze(&self.codec, &self.task, &image(seed), F_CTX).unwrap()
    }

    fn receiver(&self, view: &TransmitterView, theta: f64) -> Receiver<'_> {
        Receiver::new(&self.codec, view.geometry, ReceiverConfig { theta }).unwrap()
    }
}

fn deliver(rx: &mut Receiver, ch: &mut Channel) -> Image {
    let msg = ch.receive(Direction::Forward).unwrap().expect("a forward message");
    rx.receive_and_reconstruct(&msg).unwrap()
}

fn more_info(rx: &mut Receiver, tx: &mut Transmitter, ch: &mut Channel) -> Image {
    let (h, w) = rx.geometry().latent_dims();
    let req = semcom_core::protocol::SemMessage {
        grid_h: h as u32,
        grid_w: w as u32,
        index_bits: 4,
        body: MessageBody::MoreInfoRequest,
    };
    ch.send(Direction::Backward, &req).unwrap();
    tx.respond(ch).unwrap().expect("a reply");
    deliver(rx, ch)
}

#[test]
fn full_latent_session_matches_plain_autoencoding() {
    let fx = Fixture::new();
    let x = image(11);
    let view = analyze(&fx.codec, &fx.task, &x, F_CTX).unwrap();
    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    let mut rx = fx.receiver(&view, 0.8);
    tx.transmit(&full_latent(&view, 16), &mut ch).unwrap();
    let x_hat = deliver(&mut rx, &mut ch);
    assert_eq!(x_hat, fx.codec.decode(&fx.codec.encode(&x).unwrap()).unwrap());
    assert!(rx.is_full());
    assert_eq!(ch.sent_bits(Direction::Forward), view.r_i(16));
}

#[test]
fn context_only_session_decodes_the_reprojected_context() {
    let fx = Fixture::new();
    let view = fx.view(12);
    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    let mut rx = fx.receiver(&view, 0.8);
    tx.transmit(&context_only(&view), &mut ch).unwrap();
    deliver(&mut rx, &mut ch);
    assert_eq!(rx.z_r().unwrap(), view.z_u);
    assert_eq!(ch.sent_bits(Direction::Forward), view.r_c());

    // the first top-up after context only is the first search level
    more_info(&mut rx, &mut tx, &mut ch);
    assert_eq!(rx.z_r().unwrap(), fused_for_p(&view, DEFAULT_SEARCH_SET[0]).unwrap().1);
}

#[test]
fn more_info_rounds_walk_the_search_set() {
    let fx = Fixture::new();
    for seed in 20..24 {
        let view = fx.view(seed);
        let mut ch = Channel::new();
        let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
        let mut rx = fx.receiver(&view, 0.8);
        tx.transmit(&plan_fixed(&view, 10, 16, false).unwrap(), &mut ch).unwrap();
        deliver(&mut rx, &mut ch);
        assert_eq!(rx.z_r().unwrap(), fused_for_p(&view, 10).unwrap().1);
        for &p in &DEFAULT_SEARCH_SET[1..] {
            if rx.is_full() {
                break;
            }
            more_info(&mut rx, &mut tx, &mut ch);
            let expected = if rx.is_full() { view.z.clone() } else { fused_for_p(&view, p).unwrap().1 };
            assert_eq!(rx.z_r().unwrap(), expected, "seed {seed} p {p}");
        }
        assert!(rx.is_full());
        assert_eq!(rx.z_r().unwrap(), view.z);
        assert_eq!(tx.bits_sent(), ch.sent_bits(Direction::Forward));

        assert!(!rx.can_request_region());
        assert!(matches!(rx.region_request(PixelBox { x0: 0, y0: 0, x1: 4, y1: 4 }), Err(Error::Protocol(_))));
        let (h, w) = view.z.dims();
        let again = semcom_core::protocol::SemMessage { grid_h: h as u32, grid_w: w as u32, index_bits: 4, body: MessageBody::MoreInfoRequest };
        ch.send(Direction::Backward, &again).unwrap();
        assert!(matches!(tx.respond(&mut ch), Err(Error::Protocol(_))));
    }
}

#[test]
fn region_box_maps_to_latent_cells() {
    let fx = Fixture::new();
    let view = fx.view(30);
    let g = view.geometry;
    assert_eq!(region_cells(&g, PixelBox { x0: 0, y0: 0, x1: 4, y1: 4 }).unwrap(), vec![Cell::new(0, 0)]);
    assert_eq!(region_cells(&g, PixelBox { x0: 3, y0: 0, x1: 5, y1: 1 }).unwrap(), vec![Cell::new(0, 0), Cell::new(0, 1)]);
    assert_eq!(region_cells(&g, PixelBox { x0: 0, y0: 0, x1: 32, y1: 32 }).unwrap().len(), 64);
    assert!(region_cells(&g, PixelBox { x0: 4, y0: 4, x1: 4, y1: 8 }).is_err());
    assert!(region_cells(&g, PixelBox { x0: 0, y0: 0, x1: 33, y1: 8 }).is_err());

    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    let mut rx = fx.receiver(&view, 0.8);
    tx.transmit(&context_only(&view), &mut ch).unwrap();
    deliver(&mut rx, &mut ch);
    let region = PixelBox { x0: 8, y0: 8, x1: 16, y1: 12 };
    region_request_round(&mut rx, &mut tx, region, &mut ch).unwrap();
    assert_eq!(ch.sent_bits(Direction::Backward), 64);
    assert_eq!(rx.patch_cells(), 2);
    let z_r = rx.z_r().unwrap();
    for r in 0..8 {
        for c in 0..8 {
            let expected = if r == 2 && (c == 2 || c == 3) { view.z.get(r, c) } else { view.z_u.get(r, c) };
            assert_eq!(z_r.get(r, c), expected, "cell ({r}, {c})");
        }
    }
}

#[test]
fn region_reply_never_exceeds_the_full_latent_budget() {
    let fx = Fixture::new();
    for seed in 40..44 {
        let view = fx.view(seed);
        let r_i = view.r_i(16);
        let mut ch = Channel::new();
        let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
        let mut rx = fx.receiver(&view, 0.8);
        let p = if seed % 2 == 0 { 50 } else { 10 };
        let outcome = plan_fixed(&view, p, 16, false).unwrap();
        tx.transmit(&outcome, &mut ch).unwrap();
        deliver(&mut rx, &mut ch);
        let before = ch.sent_bits(Direction::Forward);
        assert_eq!(rx.bits_received(), before);
        let everything = PixelBox { x0: 0, y0: 0, x1: 32, y1: 32 };
        if !rx.can_request_region() {
            // 50% of an 8x8 grid already costs R_i here; the receiver must not ask
            assert!(matches!(rx.region_request(everything), Err(Error::Protocol(_))));
            let (h, w) = view.z.dims();
            let forced = semcom_core::protocol::SemMessage { grid_h: h as u32, grid_w: w as u32, index_bits: 4, body: MessageBody::RegionRequest { region: everything } };
            ch.send(Direction::Backward, &forced).unwrap();
            assert!(matches!(tx.respond(&mut ch), Err(Error::Protocol(_))));
            assert_eq!(ch.sent_bits(Direction::Forward), before);
            continue;
        }
        region_request_round(&mut rx, &mut tx, everything, &mut ch).unwrap();
        let added = ch.sent_bits(Direction::Forward) - before;
        assert!(added <= r_i - before, "seed {seed}: added {added} with {before} of {r_i} used");
    }
}

#[test]
fn confidence_gate_extremes() {
    let fx = Fixture::new();
    let view = fx.view(50);
    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();

    let mut never = fx.receiver(&view, 0.0);
    tx.transmit(&context_only(&view), &mut ch).unwrap();
    let x_hat = deliver(&mut never, &mut ch);
    assert_eq!(never.confidence_gate(&fx.task, &x_hat).unwrap(), GateOutcome::Done);

    let mut always = fx.receiver(&view, 1.0);
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    tx.transmit(&context_only(&view), &mut ch).unwrap();
    let mut x_hat = deliver(&mut always, &mut ch);
    let mut requests = 0;
    while let GateOutcome::Request(req) = always.confidence_gate(&fx.task, &x_hat).unwrap() {
        requests += 1;
        assert!(requests <= DEFAULT_SEARCH_SET.len() + 1, "gate never settles");
        ch.send(Direction::Backward, &req).unwrap();
        tx.respond(&mut ch).unwrap();
        x_hat = deliver(&mut always, &mut ch);
    }
    assert!(always.is_full());
    assert_eq!(always.z_r().unwrap(), view.z);
}

#[test]
fn transcript_replays_to_the_same_reconstruction() {
    let fx = Fixture::new();
    let view = fx.view(60);
    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    let mut rx = fx.receiver(&view, 0.8);
    tx.transmit(&plan_fixed(&view, 10, 16, false).unwrap(), &mut ch).unwrap();
    deliver(&mut rx, &mut ch);
    more_info(&mut rx, &mut tx, &mut ch);
    let live = region_request_round(&mut rx, &mut tx, PixelBox { x0: 0, y0: 0, x1: 16, y1: 16 }, &mut ch).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.bin");
    ch.transcript().save(&path).unwrap();
    let loaded = Transcript::load(&path).unwrap();
    assert_eq!(&loaded, ch.transcript());

    let mut replay = fx.receiver(&view, 0.8);
    let mut last = None;
    for (dir, msg) in loaded.messages().unwrap() {
        if dir == Direction::Forward {
            last = Some(replay.receive_and_reconstruct(&msg).unwrap());
        }
    }
    assert_eq!(last.unwrap(), live);
    assert_eq!(replay.z_r().unwrap(), rx.z_r().unwrap());
}

#[test]
fn receiver_rejects_out_of_order_messages() {
    let fx = Fixture::new();
    let view = fx.view(70);
    let mut ch = Channel::new();
    let mut tx = Transmitter::new(&fx.codec, view.clone(), &DEFAULT_SEARCH_SET).unwrap();
    let mut rx = fx.receiver(&view, 0.8);
    tx.transmit(&plan_fixed(&view, 10, 16, false).unwrap(), &mut ch).unwrap();
    let first = ch.receive(Direction::Forward).unwrap().unwrap();
    let MessageBody::ContextPlusTask { patch, .. } = &first.body else { panic!("expected a context plus task message") };
    let stray = semcom_core::protocol::SemMessage { body: MessageBody::TaskPatch { patch: patch.clone() }, ..first.clone() };
    assert!(matches!(rx.receive_and_reconstruct(&stray), Err(Error::Protocol(_))));
    let req = rx.region_request(PixelBox { x0: 0, y0: 0, x1: 4, y1: 4 }).unwrap();
    assert!(matches!(rx.receive_and_reconstruct(&req), Err(Error::Protocol(_))));
}
