use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 200;

/// 1-based page selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRequest {
    #[serde(default = "first_page")]
    pub page: usize,
    #[serde(default = "default_size")]
    pub page_size: usize,
}

fn first_page() -> usize {
    1
}

fn default_size() -> usize {
    DEFAULT_PAGE_SIZE
}

impl Default for PageRequest {
    fn default() -> Self {
        PageRequest {
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl PageRequest {
    pub fn new(page: usize, page_size: usize) -> Result<Self> {
        let req = PageRequest { page, page_size };
        req.check()?;
        Ok(req)
    }

    /// Everything on one page, for callers that want the whole list.
    pub fn all() -> Self {
        PageRequest {
            page: 1,
            page_size: usize::MAX,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.page == 0 {
            return Err(Error::InvalidPage("page numbers start at 1".into()));
        }
        if self.page_size == 0 || (self.page_size > MAX_PAGE_SIZE && self.page_size != usize::MAX) {
            return Err(Error::InvalidPage(format!(
                "page_size must be between 1 and {MAX_PAGE_SIZE}, got {}",
                self.page_size
            )));
        }
        Ok(())
    }

    /// Cuts one page out of `items`. Pages past the end are empty.
    pub fn slice<T>(&self, items: Vec<T>) -> Result<Page<T>> {
        self.check()?;
        let total = items.len();
        let start = (self.page - 1).saturating_mul(self.page_size).min(total);
        let end = start.saturating_add(self.page_size).min(total);
        let items: Vec<T> = items.into_iter().skip(start).take(end - start).collect();
        Ok(Page {
            items,
            total,
            page: self.page,
            page_size: if self.page_size == usize::MAX { total } else { self.page_size },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    /// Item count across all pages.
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}
