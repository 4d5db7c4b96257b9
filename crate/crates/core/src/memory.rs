//! One namespace of experience memory: the graph, committed experience
//! records, the task-embedding index, the resolver and the journal that
//! persists all of it.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder, VectorIndex};
use crate::graph::{GraphError, GraphStore, NewNode, NodePayload};
use crate::ids::{NodeId, NodeKind};
use crate::journal::{read_records, Journal, JournalError, LogHeader, LogRecord};
use crate::ontology::ExperienceRecord;
use crate::resolver::{EntityResolver, ResolverConfig, ResolverError};
use crate::signature::OperationCanon;

pub const LOG_FILE: &str = "memory.log";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Resolver(#[from] ResolverError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("replay: {0}")]
    Replay(String),
    #[error("namespace `{0}` already exists")]
    NamespaceExists(String),
    #[error("namespace `{0}` not found")]
    NamespaceMissing(String),
}

pub type MemoryResult<T> = Result<T, MemoryError>;

/// A committed experience and the commit counter value it was assigned.
#[derive(Clone, Debug)]
pub struct StoredExperience {
    pub node: NodeId,
    pub commit_seq: u64,
    pub record: Arc<ExperienceRecord>,
}

/// Marks an experience's procedure as the representative template of a
/// group of near-identical experiences.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateMark {
    pub node: NodeId,
    pub procedure_ref: String,
    pub members: Vec<NodeId>,
}

pub struct Memory {
    namespace: String,
    store: GraphStore,
    experiences: BTreeMap<NodeId, StoredExperience>,
    commit_order: Vec<NodeId>,
    task_index: VectorIndex,
    resolver: EntityResolver,
    canon: Arc<OperationCanon>,
    embedder: Arc<dyn Embedder>,
    templates: BTreeMap<NodeId, TemplateMark>,
}

impl std::fmt::Debug for Memory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Memory")
            .field("namespace", &self.namespace)
            .field("nodes", &self.store.node_count())
            .field("edges", &self.store.edge_count())
            .field("experiences", &self.experiences.len())
            .finish()
    }
}

/// Thread-safe handle: many readers or one writer.
pub type SharedMemory = Arc<RwLock<Memory>>;

impl Memory {
    pub fn new(namespace: &str, embedder: Arc<dyn Embedder>) -> Self {
        Self::with_config(namespace, embedder, ResolverConfig::default(), Arc::new(OperationCanon::default()))
    }

    pub fn with_config(
        namespace: &str,
        embedder: Arc<dyn Embedder>,
        resolver_cfg: ResolverConfig,
        canon: Arc<OperationCanon>,
    ) -> Self {
        let journal = Journal::new(namespace, Some(embedder.dim()));
        Self {
            namespace: namespace.to_string(),
            store: GraphStore::with_journal(journal),
            experiences: BTreeMap::new(),
            commit_order: Vec::new(),
            task_index: VectorIndex::new(embedder.dim()),
            resolver: EntityResolver::new(resolver_cfg, embedder.clone()),
            canon,
            embedder,
            templates: BTreeMap::new(),
        }
    }

    pub fn into_shared(self) -> SharedMemory {
        Arc::new(RwLock::new(self))
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn store(&self) -> &GraphStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut GraphStore {
        &mut self.store
    }

    /// Graph and resolver borrowed together for writes that need both.
    pub fn graph_and_resolver(&mut self) -> (&mut GraphStore, &mut EntityResolver, &OperationCanon) {
        (&mut self.store, &mut self.resolver, &self.canon)
    }

    pub fn resolver(&self) -> &EntityResolver {
        &self.resolver
    }

    pub fn canon(&self) -> &OperationCanon {
        &self.canon
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn task_index(&self) -> &VectorIndex {
        &self.task_index
    }

    pub fn experience(&self, id: NodeId) -> Option<&StoredExperience> {
        self.experiences.get(&id)
    }

    pub fn experiences(&self) -> impl Iterator<Item = &StoredExperience> {
        self.experiences.values()
    }

    pub fn experience_count(&self) -> usize {
        self.experiences.len()
    }

    /// Experience ids in commit order.
    pub fn commit_order(&self) -> &[NodeId] {
        &self.commit_order
    }

    pub fn commit_count(&self) -> u64 {
        self.commit_order.len() as u64
    }

    /// Not archived and not superseded.
    pub fn is_live(&self, id: NodeId) -> bool {
        !self.store.is_archived(id) && !self.store.is_superseded(id)
    }

    pub fn templates(&self) -> &BTreeMap<NodeId, TemplateMark> {
        &self.templates
    }

    /// Adds the Experience node and stores the record under it. Callers are
    /// responsible for validation and for the record's edges.
    pub(crate) fn insert_experience(&mut self, mut record: ExperienceRecord) -> MemoryResult<StoredExperience> {
        let commit_seq = self.commit_count() + 1;
        let description = record.goal.task_description.clone();
        let title: String = description.chars().take(80).collect();
        let node = self.store.add_node(NewNode::new(
            title,
            description,
            record.goal.domain.clone(),
            NodePayload::Experience { commit_seq },
        ))?;
        record.id = Some(node);
        self.attach_experience(node, commit_seq, record)
    }

    fn attach_experience(
        &mut self,
        node: NodeId,
        commit_seq: u64,
        record: ExperienceRecord,
    ) -> MemoryResult<StoredExperience> {
        if commit_seq != self.commit_count() + 1 {
            return Err(MemoryError::Replay(format!("{node} has commit_seq {commit_seq} out of order")));
        }
        self.task_index.insert(node, record.goal.task_embedding.clone())?;
        let stored = StoredExperience { node, commit_seq, record: Arc::new(record) };
        self.store.journal_mut().append(&LogRecord::Experience {
            node,
            commit_seq,
            record: Box::new((*stored.record).clone()),
        });
        self.experiences.insert(node, stored.clone());
        self.commit_order.push(node);
        Ok(stored)
    }

    /// Creates the next version of an entity and keeps the resolver coherent.
    pub fn version_entity(&mut self, old: NodeId, replacement: NewNode) -> MemoryResult<NodeId> {
        let domain = replacement.domain_tag.clone();
        let old_domain = self.store.node(old).map(|n| n.domain_tag.clone());
        let title = replacement.title.clone();
        let id = self.store.version_entity(old, replacement)?;
        self.resolver.index_node(id, &title)?;
        self.resolver.invalidate(NodeKind::Entity, &domain);
        if let Some(d) = old_domain {
            self.resolver.invalidate(NodeKind::Entity, &d);
        }
        Ok(id)
    }

    pub(crate) fn put_template(&mut self, mark: TemplateMark) {
        self.store.journal_mut().append(&LogRecord::Template {
            node: mark.node,
            procedure_ref: mark.procedure_ref.clone(),
            members: mark.members.clone(),
        });
        self.templates.insert(mark.node, mark);
    }

    /// Applies one journal record to this memory.
    pub fn apply(&mut self, record: LogRecord) -> MemoryResult<()> {
        match record {
            LogRecord::Node { node } => {
                let (kind, id, title) = (node.kind, node.id, node.title.clone());
                let domain = node.domain_tag.clone();
                self.store.insert_node(node)?;
                if matches!(kind, NodeKind::Entity | NodeKind::Operation) {
                    self.resolver.index_node(id, &title)?;
                    self.resolver.invalidate(kind, &domain);
                }
            }
            LogRecord::Edge { edge } => {
                let superseded = (edge.kind == crate::ids::EdgeKind::Supersedes).then_some(edge.to);
                self.store.insert_edge(edge)?;
                if let Some(old) = superseded.and_then(|id| self.store.node(id)) {
                    let (kind, domain) = (old.kind, old.domain_tag.clone());
                    self.resolver.invalidate(kind, &domain);
                }
            }
            LogRecord::Flag { node, flag, value } => {
                self.store.set_flag(node, flag, value)?;
            }
            LogRecord::Experience { node, commit_seq, record } => {
                match self.store.node(node).map(|n| &n.payload) {
                    Some(NodePayload::Experience { commit_seq: s }) if *s == commit_seq => {}
                    _ => return Err(MemoryError::Replay(format!("experience record for unknown node {node}"))),
                }
                if self.experiences.contains_key(&node) {
                    return Err(MemoryError::Replay(format!("duplicate experience record for {node}")));
                }
                if record.id != Some(node) {
                    return Err(MemoryError::Replay(format!("experience record id does not match {node}")));
                }
                self.attach_experience(node, commit_seq, *record)?;
            }
            LogRecord::Template { node, procedure_ref, members } => {
                if !self.experiences.contains_key(&node) {
                    return Err(MemoryError::Replay(format!("template mark for unknown experience {node}")));
                }
                self.put_template(TemplateMark { node, procedure_ref, members });
            }
        }
        Ok(())
    }

    /// Rebuilds a memory from a journal stream.
    pub fn replay(
        header: &LogHeader,
        records: Vec<LogRecord>,
        embedder: Arc<dyn Embedder>,
    ) -> MemoryResult<Self> {
        if let Some(dim) = header.dim {
            if dim != embedder.dim() {
                return Err(MemoryError::Embed(EmbedError::DimMismatch { left: dim, right: embedder.dim() }));
            }
        }
        let mut mem = Self::new(&header.namespace, embedder);
        for record in records {
            mem.apply(record)?;
        }
        Ok(mem)
    }

    pub fn import_str(text: &str, embedder: Arc<dyn Embedder>) -> MemoryResult<Self> {
        let (header, records) = read_records(text.as_bytes())?;
        Self::replay(&header, records, embedder)
    }

    /// Full journal text; importing it reproduces this memory and this text.
    pub fn export_string(&self) -> String {
        self.store.journal().export_string()
    }

    /// Flushes the on-disk journal, if attached.
    pub fn sync(&mut self) -> MemoryResult<()> {
        self.store.journal_mut().sync()?;
        Ok(())
    }
}

/// Directory layout: `<root>/<namespace>/memory.log`.
#[derive(Clone, Debug)]
pub struct NamespaceDir {
    root: PathBuf,
}

impl NamespaceDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, namespace: &str) -> PathBuf {
        self.root.join(namespace)
    }

    pub fn log_path(&self, namespace: &str) -> PathBuf {
        self.path(namespace).join(LOG_FILE)
    }

    pub fn exists(&self, namespace: &str) -> bool {
        self.log_path(namespace).exists()
    }

    /// Creates an empty namespace and returns its memory, mirrored to disk.
    pub fn init(&self, namespace: &str, embedder: Arc<dyn Embedder>) -> MemoryResult<Memory> {
        if self.exists(namespace) {
            return Err(MemoryError::NamespaceExists(namespace.to_string()));
        }
        fs::create_dir_all(self.path(namespace))?;
        let mut mem = Memory::new(namespace, embedder);
        mem.store_mut().journal_mut().attach_file(&self.log_path(namespace))?;
        Ok(mem)
    }

    /// Loads a namespace and mirrors further writes to its log.
    pub fn open(&self, namespace: &str, embedder: Arc<dyn Embedder>) -> MemoryResult<Memory> {
        let path = self.log_path(namespace);
        if !path.exists() {
            return Err(MemoryError::NamespaceMissing(namespace.to_string()));
        }
        let (header, records) = read_records(fs::File::open(&path)?)?;
        if header.namespace != namespace {
            log::debug!("log at {} was exported from namespace `{}`", path.display(), header.namespace);
        }
        let mut mem = Memory::replay(&header, records, embedder)?;
        mem.namespace = namespace.to_string();
        mem.store_mut().journal_mut().attach_file(&path)?;
        Ok(mem)
    }

    /// Replaces a namespace's log with `text` after checking that it replays.
    pub fn import(&self, namespace: &str, text: &str, embedder: Arc<dyn Embedder>) -> MemoryResult<Memory> {
        Memory::import_str(text, embedder.clone())?;
        fs::create_dir_all(self.path(namespace))?;
        write_atomic(&self.log_path(namespace), text)?;
        self.open(namespace, embedder)
    }
}

fn write_atomic(path: &Path, text: &str) -> io::Result<()> {
    let tmp = path.with_extension("log.tmp");
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)
}
