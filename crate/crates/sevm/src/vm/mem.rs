//! Sparse, page-granular guest memory.
//!
//! Pages are mapped explicitly while an input state is being staged. During
//! function execution any access touching an unmapped byte faults; pages are
//! never created silently.

use std::collections::BTreeMap;

/// Page size in bytes.
pub const PAGE_SIZE: u64 = 4096;

/// Byte-addressed memory backed by a sorted map of 4096-byte pages.
#[derive(Clone, Default, Debug)]
pub struct PageMemory {
    pages: BTreeMap<u64, Box<[u8; PAGE_SIZE as usize]>>,
}

/// Failed access: the address of the first byte the instruction asked for.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Unmapped(pub u64);

fn page_base(addr: u64) -> u64 {
    addr & !(PAGE_SIZE - 1)
}

impl PageMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maps every page overlapping `[base, base + len)`, zero-filled.
    /// Re-mapping an already mapped page leaves its contents alone.
    pub fn map_region(&mut self, base: u64, len: u64) {
        if len == 0 {
            return;
        }
        let last = base + (len - 1);
        let mut page = page_base(base);
        loop {
            self.pages
                .entry(page)
                .or_insert_with(|| Box::new([0u8; PAGE_SIZE as usize]));
            if page_base(last) == page {
                break;
            }
            page += PAGE_SIZE;
        }
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.pages.contains_key(&page_base(addr))
    }

    /// True when every byte of `[addr, addr + len)` is mapped.
    pub fn is_mapped_range(&self, addr: u64, len: u64) -> bool {
        (0..len).all(|i| self.is_mapped(addr.wrapping_add(i)))
    }

    pub fn read_u8(&self, addr: u64) -> Result<u8, Unmapped> {
        self.pages
            .get(&page_base(addr))
            .map(|p| p[(addr % PAGE_SIZE) as usize])
            .ok_or(Unmapped(addr))
    }

    pub fn write_u8(&mut self, addr: u64, value: u8) -> Result<(), Unmapped> {
        match self.pages.get_mut(&page_base(addr)) {
            Some(p) => {
                p[(addr % PAGE_SIZE) as usize] = value;
                Ok(())
            }
            None => Err(Unmapped(addr)),
        }
    }

    /// Little-endian 8-byte read. Faults with the access base address when
    /// any byte of the span is unmapped.
    pub fn read_u64(&self, addr: u64) -> Result<u64, Unmapped> {
        let mut bytes = [0u8; 8];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = self
                .read_u8(addr.wrapping_add(i as u64))
                .map_err(|_| Unmapped(addr))?;
        }
        Ok(u64::from_le_bytes(bytes))
    }

    pub fn write_u64(&mut self, addr: u64, value: u64) -> Result<(), Unmapped> {
        if !self.is_mapped_range(addr, 8) {
            return Err(Unmapped(addr));
        }
        for (i, b) in value.to_le_bytes().iter().enumerate() {
            self.write_u8(addr.wrapping_add(i as u64), *b).unwrap();
        }
        Ok(())
    }

    pub fn read_bytes(&self, addr: u64, len: u64) -> Result<Vec<u8>, Unmapped> {
        (0..len)
            .map(|i| self.read_u8(addr.wrapping_add(i)))
            .collect()
    }

    pub fn write_bytes(&mut self, addr: u64, bytes: &[u8]) -> Result<(), Unmapped> {
        if !self.is_mapped_range(addr, bytes.len() as u64) {
            return Err(Unmapped(addr));
        }
        for (i, b) in bytes.iter().enumerate() {
            self.write_u8(addr.wrapping_add(i as u64), *b).unwrap();
        }
        Ok(())
    }
}
