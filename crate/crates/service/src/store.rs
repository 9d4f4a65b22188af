use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use tokio::sync::RwLock;

use attnclust_core::grabcut::{GrabcutSession, Rect, RgbImage};

use crate::error::ApiError;
use crate::SessionSummary;

#[derive(Debug)]
pub struct SessionRecord {
    pub id: String,
    pub image: RgbImage,
    pub seed: u64,
    pub bbox: Option<Rect>,
    /// Present once a bounding box has been set.
    pub grabcut: Option<GrabcutSession>,
    /// Bumped by exactly one on every successful mutation.
    pub revision: u64,
}

impl SessionRecord {
    pub fn summary(&self) -> SessionSummary {
        let mask = self.grabcut.as_ref().and_then(|s| s.mask());
        SessionSummary {
            id: self.id.clone(),
            width: self.image.width(),
            height: self.image.height(),
            revision: self.revision,
            seed: self.seed,
            bbox: self.bbox,
            has_mask: mask.is_some(),
            foreground: mask.map(|m| m.foreground_count()),
            energy_history: self
                .grabcut
                .as_ref()
                .map(|s| s.energy_history().to_vec())
                .unwrap_or_default(),
        }
    }
}

/// FNV-1a over the id bytes; fixes a session's GrabCut seed.
pub fn session_seed(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct Slot {
    record: Arc<RwLock<SessionRecord>>,
    last_access: Instant,
}

/// In-memory sessions with idle expiry, evicted lazily on access.
pub struct SessionStore {
    ttl: Duration,
    slots: Mutex<HashMap<String, Slot>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn evict(&self, slots: &mut HashMap<String, Slot>, now: Instant) {
        slots.retain(|_, s| now.duration_since(s.last_access) <= self.ttl);
    }

    pub fn insert(&self, image: RgbImage) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord {
            id: id.clone(),
            image,
            seed: session_seed(&id),
            bbox: None,
            grabcut: None,
            revision: 0,
        };
        let now = Instant::now();
        let mut slots = self.slots.lock().expect("store lock poisoned");
        self.evict(&mut slots, now);
        slots.insert(
            id.clone(),
            Slot {
                record: Arc::new(RwLock::new(record)),
                last_access: now,
            },
        );
        id
    }

    pub fn get(&self, id: &str) -> Result<Arc<RwLock<SessionRecord>>, ApiError> {
        let now = Instant::now();
        let mut slots = self.slots.lock().expect("store lock poisoned");
        self.evict(&mut slots, now);
        let slot = slots.get_mut(id).ok_or_else(|| ApiError::not_found(id))?;
        slot.last_access = now;
        Ok(Arc::clone(&slot.record))
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let mut slots = self.slots.lock().expect("store lock poisoned");
        slots.remove(id).map(|_| ()).ok_or_else(|| ApiError::not_found(id))
    }

    pub fn len(&self) -> usize {
        let now = Instant::now();
        let mut slots = self.slots.lock().expect("store lock poisoned");
        self.evict(&mut slots, now);
        slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
