use super::channel::{Channel, Direction};
use super::message::{payload_bits, MessageBody, PixelBox, SemMessage};
use crate::imagecore::Image;
use crate::saliency::{Cell, TaskModel};
use crate::semcom::rate::{image_bits, task_patch_bits};
use crate::semcom::{build_mask, fuse, reproject_context, validate_search_set, Geometry, LsfMode, LsfOutcome, Patch, TransmitterView};
use crate::vq::{CodecModel, LatentGrid};
use crate::{Error, Result};

/// Transmitter state for one image.
#[derive(Debug)]
pub struct Transmitter<'a> {
    codec: &'a CodecModel,
    view: TransmitterView,
    search_set: Vec<u32>,
    sent: Vec<bool>,
    /// Position in the search set of the last percentage delivered.
    level: Option<usize>,
    full_sent: bool,
    round: u32,
    bits_sent: u64,
}

impl<'a> Transmitter<'a> {
    pub fn new(codec: &'a CodecModel, view: TransmitterView, search_set: &[u32]) -> Result<Self> {
        validate_search_set(search_set)?;
        let cells = view.z.cells();
        Ok(Self { codec, view, search_set: search_set.to_vec(), sent: vec![false; cells], level: None, full_sent: false, round: 0, bits_sent: 0 })
    }

    pub fn view(&self) -> &TransmitterView {
        &self.view
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn sent_cells(&self) -> usize {
        self.sent.iter().filter(|&&s| s).count()
    }

    fn header(&self, grid: (usize, usize), body: MessageBody) -> SemMessage {
        SemMessage {
            grid_h: grid.0 as u32,
            grid_w: grid.1 as u32,
            index_bits: self.codec.bits_per_index() as u8,
            body,
        }
    }

    fn mark(&mut self, cells: impl IntoIterator<Item = usize>) {
        for c in cells {
            self.sent[c] = true;
        }
    }

    /// Forward payload bits sent so far.
    pub fn bits_sent(&self) -> u64 {
        self.bits_sent
    }

    fn send(&mut self, ch: &mut Channel, msg: SemMessage) -> Result<u64> {
        self.round += 1;
        let bits = ch.send(Direction::Forward, &msg)?;
        self.bits_sent += bits;
        Ok(bits)
    }

    fn send_full(&mut self, ch: &mut Channel) -> Result<u64> {
        let msg = self.header(self.view.z.dims(), MessageBody::FullLatent { indices: self.view.z.indices().to_vec() });
        self.mark(0..self.sent.len());
        self.full_sent = true;
        self.level = Some(self.search_set.len() - 1);
        self.send(ch, msg)
    }

    /// First round: sends what `outcome` decided. Returns payload bits.
    pub fn transmit(&mut self, outcome: &LsfOutcome, ch: &mut Channel) -> Result<u64> {
        match outcome.decision.mode {
            LsfMode::ContextOnly => {
                let z_c = &self.view.context.z_c;
                let msg = self.header(z_c.dims(), MessageBody::ContextOnly { indices: z_c.indices().to_vec() });
                self.send(ch, msg)
            }
            LsfMode::ContextPlusTask { p } => {
                let patch = outcome.patch(&self.view)?;
                let msg = self.header(
                    self.view.z.dims(),
                    MessageBody::ContextPlusTask {
                        context_factor: self.view.geometry.f_ctx as u8,
                        context: self.view.context.z_c.indices().to_vec(),
                        patch: patch.clone(),
                    },
                );
                self.mark(patch.cells().iter().map(|&c| c as usize));
                self.level = self.search_set.iter().rposition(|&q| q <= p);
                self.send(ch, msg)
            }
            LsfMode::FullLatent => self.send_full(ch),
        }
    }

    /// Answers the next request waiting on the backward link, if any.
    /// Returns the payload bits of the reply.
    pub fn respond(&mut self, ch: &mut Channel) -> Result<Option<u64>> {
        let Some(req) = ch.receive(Direction::Backward)? else {
            return Ok(None);
        };
        match req.body {
            MessageBody::MoreInfoRequest => self.more_info(ch).map(Some),
            MessageBody::RegionRequest { region } => self.region(region, ch).map(Some),
            _ => Err(Error::Protocol(format!("transmitter got a {:?} message", req.msg_type()))),
        }
    }

    /// Delivers the cells of the next percentage not yet sent, or the full
    /// latent when that is no more expensive or the search set is used up.
    fn more_info(&mut self, ch: &mut Channel) -> Result<u64> {
        if self.full_sent || self.sent.iter().all(|&s| s) {
            return Err(Error::Protocol("more information requested after the full latent".into()));
        }
        let next = self.level.map_or(0, |l| l + 1);
        if next >= self.search_set.len() {
            return self.send_full(ch);
        }
        let p = self.search_set[next];
        let delta: Vec<Cell> = self
            .view
            .top_cells(p)?
            .iter()
            .copied()
            .filter(|c| !self.sent[c.flat(self.view.z.width())])
            .collect();
        let k = self.codec.codebook().size();
        if task_patch_bits(self.sent.len(), delta.len(), self.codec.bits_per_index()) >= self.view.r_i(k) {
            return self.send_full(ch);
        }
        let patch = Patch::from_latent(&self.view.z, &delta)?;
        self.mark(patch.cells().iter().map(|&c| c as usize));
        self.level = Some(next);
        let msg = self.header(self.view.z.dims(), MessageBody::TaskPatch { patch });
        self.send(ch, msg)
    }

    /// Sends the box's cells the receiver lacks. If that would take the
    /// session past `R_i` in total, only the highest-priority cells that
    /// fit the remaining budget are sent.
    fn region(&mut self, region: PixelBox, ch: &mut Channel) -> Result<u64> {
        let width = self.view.z.width();
        let mut in_box = vec![false; self.sent.len()];
        for c in region_cells(&self.view.geometry, region)? {
            in_box[c.flat(width)] = true;
        }
        let mut fresh: Vec<Cell> =
            self.view.ranked.iter().copied().filter(|c| in_box[c.flat(width)] && !self.sent[c.flat(width)]).collect();
        let budget = self.view.r_i(self.codec.codebook().size()).saturating_sub(self.bits_sent);
        let b = self.codec.bits_per_index();
        while !fresh.is_empty() && task_patch_bits(self.sent.len(), fresh.len(), b) > budget {
            fresh.pop();
        }
        if task_patch_bits(self.sent.len(), fresh.len(), b) > budget {
            return Err(Error::Protocol("region request with no budget left under R_i".into()));
        }
        let patch = Patch::from_latent(&self.view.z, &fresh)?;
        self.mark(patch.cells().iter().map(|&c| c as usize));
        let msg = self.header(self.view.z.dims(), MessageBody::TaskPatch { patch });
        self.send(ch, msg)
    }
}

/// Latent cells covering a pixel box: mins divide down, maxes divide up.
pub fn region_cells(geometry: &Geometry, region: PixelBox) -> Result<Vec<Cell>> {
    if region.is_empty() {
        return Err(Error::Argument(format!("empty region {region:?}")));
    }
    if region.x1 as usize > geometry.width || region.y1 as usize > geometry.height {
        return Err(Error::Argument(format!("region {region:?} leaves the {}x{} image", geometry.width, geometry.height)));
    }
    let f = geometry.f_model;
    let (r0, r1) = (region.y0 as usize / f, (region.y1 as usize).div_ceil(f));
    let (c0, c1) = (region.x0 as usize / f, (region.x1 as usize).div_ceil(f));
    Ok((r0..r1).flat_map(|r| (c0..c1).map(move |c| Cell::new(r, c))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverConfig {
    /// Confidence below which the receiver asks for more.
    pub theta: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self { theta: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    Request(SemMessage),
    Done,
}

/// Receiver state for one image.
#[derive(Debug)]
pub struct Receiver<'a> {
    codec: &'a CodecModel,
    geometry: Geometry,
    config: ReceiverConfig,
    z_u: Option<LatentGrid>,
    patch: Patch,
    full: Option<LatentGrid>,
    round: u32,
    bits_received: u64,
}

impl<'a> Receiver<'a> {
    pub fn new(codec: &'a CodecModel, geometry: Geometry, config: ReceiverConfig) -> Result<Self> {
        if geometry.f_model != codec.f_model() {
            return Err(Error::Argument("receiver geometry disagrees with the codec stride".into()));
        }
        Ok(Self { codec, geometry, config, z_u: None, patch: Patch::default(), full: None, round: 0, bits_received: 0 })
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Cells received from the image latent so far.
    pub fn patch_cells(&self) -> usize {
        if self.full.is_some() {
            self.geometry.image_cells()
        } else {
            self.patch.len()
        }
    }

    pub fn is_full(&self) -> bool {
        self.full.is_some()
    }

    /// Forward payload bits received in this session.
    pub fn bits_received(&self) -> u64 {
        self.bits_received
    }

    /// Whether a region reply, even an empty one, still fits under `R_i`.
    pub fn can_request_region(&self) -> bool {
        let cells = self.geometry.image_cells();
        let r_i = image_bits(&self.geometry, self.codec.codebook().size());
        self.bits_received + task_patch_bits(cells, 0, self.codec.bits_per_index()) <= r_i
    }

    fn expect_grid(&self, msg: &SemMessage, dims: (usize, usize)) -> Result<()> {
        if (msg.grid_h as usize, msg.grid_w as usize) != dims {
            return Err(Error::Protocol(format!(
                "{:?} grid {}x{} does not match the session's {}x{}",
                msg.msg_type(),
                msg.grid_h,
                msg.grid_w,
                dims.0,
                dims.1
            )));
        }
        if msg.index_bits as u32 != self.codec.bits_per_index() {
            return Err(Error::Protocol(format!("index width {} does not match the codebook", msg.index_bits)));
        }
        Ok(())
    }

    fn start(&mut self, z_c: LatentGrid) -> Result<()> {
        self.z_u = Some(reproject_context(self.codec, &z_c, self.geometry.f_ctx)?);
        self.patch = Patch::default();
        self.full = None;
        Ok(())
    }

    /// Applies a forward message and returns the current reconstruction.
    pub fn receive_and_reconstruct(&mut self, msg: &SemMessage) -> Result<Image> {
        let latent = self.geometry.latent_dims();
        match &msg.body {
            MessageBody::ContextOnly { indices } => {
                let dims = self.geometry.context_dims();
                self.expect_grid(msg, dims)?;
                self.start(LatentGrid::new(dims.0, dims.1, indices.clone())?)?;
            }
            MessageBody::ContextPlusTask { context_factor, context, patch } => {
                self.expect_grid(msg, latent)?;
                if *context_factor as usize != self.geometry.f_ctx {
                    return Err(Error::Protocol(format!("context factor {context_factor} differs from the session's")));
                }
                let (ch, cw) = self.geometry.context_dims();
                self.start(LatentGrid::new(ch, cw, context.clone())?)?;
                self.patch = patch.clone();
            }
            MessageBody::FullLatent { indices } => {
                self.expect_grid(msg, latent)?;
                self.full = Some(LatentGrid::new(latent.0, latent.1, indices.clone())?);
            }
            MessageBody::TaskPatch { patch } => {
                if self.z_u.is_none() && self.full.is_none() {
                    return Err(Error::Protocol("task patch before any context".into()));
                }
                self.expect_grid(msg, latent)?;
                if self.full.is_none() {
                    self.patch = self.patch.merge(patch)?;
                }
            }
            MessageBody::MoreInfoRequest | MessageBody::RegionRequest { .. } => {
                return Err(Error::Protocol("receiver got a request message".into()));
            }
        }
        self.round += 1;
        self.bits_received += payload_bits(msg);
        if self.full.is_none() && self.patch.len() == self.geometry.image_cells() {
            self.full = Some(LatentGrid::new(latent.0, latent.1, self.patch.indices().to_vec())?);
        }
        self.codec.decode(&self.z_r()?)
    }

    /// The fused grid the receiver currently decodes.
    pub fn z_r(&self) -> Result<LatentGrid> {
        if let Some(full) = &self.full {
            return Ok(full.clone());
        }
        let z_u = self.z_u.as_ref().ok_or_else(|| Error::Protocol("nothing received yet".into()))?;
        let (h, w) = z_u.dims();
        let mask = build_mask(&self.patch.cell_list(w), h, w)?;
        fuse(z_u, &self.patch, &mask)
    }

    fn request(&self, body: MessageBody) -> SemMessage {
        let (h, w) = self.geometry.latent_dims();
        SemMessage { grid_h: h as u32, grid_w: w as u32, index_bits: self.codec.bits_per_index() as u8, body }
    }

    /// Asks for more when the task's top probability on `x_hat` is below
    /// the threshold; a receiver holding the full latent is always done.
    pub fn confidence_gate(&self, task: &TaskModel, x_hat: &Image) -> Result<GateOutcome> {
        if self.is_full() {
            return Ok(GateOutcome::Done);
        }
        let confidence = task.probabilities(x_hat)?.into_iter().fold(0.0, f64::max);
        if confidence < self.config.theta {
            Ok(GateOutcome::Request(self.request(MessageBody::MoreInfoRequest)))
        } else {
            Ok(GateOutcome::Done)
        }
    }

    pub fn region_request(&self, region: PixelBox) -> Result<SemMessage> {
        region_cells(&self.geometry, region)?;
        if !self.can_request_region() {
            return Err(Error::Protocol("no budget left under R_i for a region reply".into()));
        }
        Ok(self.request(MessageBody::RegionRequest { region }))
    }
}

/// One region-request exchange: the receiver asks for `region`, the
/// transmitter answers with the missing cells, the receiver re-decodes.
pub fn region_request_round(rx: &mut Receiver, tx: &mut Transmitter, region: PixelBox, ch: &mut Channel) -> Result<Image> {
    let req = rx.region_request(region)?;
    ch.send(Direction::Backward, &req)?;
    tx.respond(ch)?;
    let reply = ch.receive(Direction::Forward)?.ok_or_else(|| Error::Protocol("no reply to region request".into()))?;
    rx.receive_and_reconstruct(&reply)
}
