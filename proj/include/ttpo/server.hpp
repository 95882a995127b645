// SPDX-License-Identifier: Apache-2.0
//
// HTTP service backing the human selection UI. JSON over /api/*:
//
//   GET  /api/candidates   {candidates: [{id, height, width, pixels}]}
//   GET  /api/pairs        {pairs: [{index, a, b}], total}
//   POST /api/choice       {pair_index, winner_id} -> {recorded, answered, total}
//   GET  /api/result       {win_id, lose_id, counts} or {pending, answered, total}
//   POST /api/finalize     writes pair.json, starts optimize -> {status, output_available}
//   GET  /api/output       {status, output_available[, height, width, pixels, curves]}
//   POST /api/pick         {win_id, lose_id}; quick mode only
//
// Pixels are row-major and min-max scaled to [0, 1], as in the PGM dump.
#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace ttpo {

struct ServeOptions {
    bool quick = false;  // accept a direct best/worst pick instead of all pairs
};

class SelectionServer {
public:
    SelectionServer(std::filesystem::path run_dir, ServeOptions opt = {});
    ~SelectionServer();
    SelectionServer(const SelectionServer&) = delete;
    SelectionServer& operator=(const SelectionServer&) = delete;

    /// Binds to host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();
    /// Waits for a background optimize, if one was started.
    void wait_for_output();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ttpo
