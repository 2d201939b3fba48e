/*
 * Copyright 2026 The bfv authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace bfv {

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Deterministic parallel reduction. [0, count) is cut into fixed-size chunks;
// `body(partial, begin, end)` fills a fresh Partial per chunk and `absorb`
// consumes the partials in ascending chunk order. The chunk grid and the
// absorb order depend only on (count, chunk_size), never on the thread count,
// so floating-point results are bit-identical for any `threads` value.
//
// Workers stall once more than 2*threads finished chunks await absorption,
// which bounds memory at O(threads) partials.
template <typename Partial, typename Make, typename Body, typename Absorb>
void chunked_reduce(std::size_t count, std::size_t chunk_size, unsigned threads,
                    Make make, Body body, Absorb absorb) {
  if (count == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
  threads = std::min<std::size_t>(resolve_threads(threads), n_chunks);

  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      Partial p = make();
      body(p, c * chunk_size, std::min(count, (c + 1) * chunk_size));
      absorb(p);
    }
    return;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, Partial> done;
  std::atomic<std::size_t> next_chunk{0};
  std::size_t next_absorb = 0;
  std::exception_ptr failure;
  const std::size_t backlog_cap = 2 * static_cast<std::size_t>(threads);

  auto worker = [&] {
    try {
      for (;;) {
        const std::size_t c = next_chunk.fetch_add(1);
        if (c >= n_chunks) return;
        Partial p = make();
        body(p, c * chunk_size, std::min(count, (c + 1) * chunk_size));
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] {
          return failure || c < next_absorb + backlog_cap;
        });
        if (failure) return;
        done.emplace(c, std::move(p));
        cv.notify_all();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);

  {
    std::unique_lock<std::mutex> lock(mu);
    while (next_absorb < n_chunks) {
      cv.wait(lock, [&] {
        return failure || done.count(next_absorb) != 0;
      });
      if (failure) break;
      Partial p = std::move(done.at(next_absorb));
      done.erase(next_absorb);
      lock.unlock();
      try {
        absorb(p);
      } catch (...) {
        lock.lock();
        if (!failure) failure = std::current_exception();
        cv.notify_all();
        break;
      }
      lock.lock();
      ++next_absorb;
      cv.notify_all();
    }
  }

  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace bfv
